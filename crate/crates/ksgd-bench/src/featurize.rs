//! Caches engineered features to disk so runs consume them as a plain CSV
//! source and never pay featurization cost inside their timed loops.
//!
//! Wavelet expansion reads numeric raw coordinates through the normal CSV
//! schema; one-hot encoding reads named string columns directly, since the
//! numeric observation path cannot carry categorical levels.

use std::io::Write;
use std::path::PathBuf;

use ksgd::data::{stream_csv, ColumnSelector, MalformedPolicy};
use ksgd::models::{encode_categoricals, haar_features, EncodingSchema, FieldSchema, FieldValue};
use ksgd::{DVector, KsgdError, Result};

use crate::config::{DataSource, FeaturizeConfig, ResolvedConfig};

#[derive(Debug, Clone)]
pub struct FeaturizeReport {
    pub rows: u64,
    pub skipped: u64,
    pub out_path: PathBuf,
}

fn feature_header(width: usize) -> String {
    let mut names: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    names.push("y".to_string());
    names.join(",")
}

fn write_row(out: &mut impl Write, features: &DVector<f64>, y: f64) -> Result<()> {
    for v in features.iter() {
        write!(out, "{v},")?;
    }
    writeln!(out, "{y}")?;
    Ok(())
}

/// Expands each raw observation to Haar wavelet features.
fn featurize_wavelet(
    cfg: &ResolvedConfig,
    wavelet: &ksgd::models::WaveletConfig,
    out_path: &PathBuf,
) -> Result<FeaturizeReport> {
    let DataSource::Csv {
        path,
        schema,
        on_malformed,
    } = &cfg.data
    else {
        return Err(KsgdError::InvalidParameter(
            "featurization reads a csv source".into(),
        ));
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    writeln!(out, "{}", feature_header(wavelet.output_dim()))?;
    let mut stream = stream_csv(path, schema, *on_malformed)?;
    let mut rows = 0u64;
    let mut domain_skipped = 0u64;
    for obs in stream.by_ref() {
        let obs = obs?;
        match haar_features(obs.x.as_slice(), wavelet) {
            Ok(features) => {
                write_row(&mut out, &features, obs.y)?;
                rows += 1;
            }
            Err(err) => match on_malformed {
                MalformedPolicy::Abort => return Err(err),
                MalformedPolicy::SkipAndCount => domain_skipped += 1,
            },
        }
    }
    out.flush()?;
    Ok(FeaturizeReport {
        rows,
        skipped: stream.skipped() + domain_skipped,
        out_path: out_path.clone(),
    })
}

/// One-hot encodes categorical columns; needs a headered file so fields can
/// be located by name.
fn featurize_onehot(
    cfg: &ResolvedConfig,
    encoding: &EncodingSchema,
    out_path: &PathBuf,
) -> Result<FeaturizeReport> {
    let DataSource::Csv {
        path,
        schema,
        on_malformed,
    } = &cfg.data
    else {
        return Err(KsgdError::InvalidParameter(
            "featurization reads a csv source".into(),
        ));
    };
    if !schema.has_header {
        return Err(KsgdError::Schema(
            "one-hot featurization needs a headered file to locate fields by name".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(schema.delimiter)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| KsgdError::Schema(format!("column {name:?} not found in header")))
    };
    let field_columns: Vec<usize> = encoding
        .fields
        .iter()
        .map(|f| {
            locate(match f {
                FieldSchema::Categorical { name, .. } => name,
                FieldSchema::Numeric { name } => name,
            })
        })
        .collect::<Result<_>>()?;
    let response_column = match &schema.response {
        ColumnSelector::Name(name) => locate(name)?,
        ColumnSelector::Index(i) => *i,
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    writeln!(out, "{}", feature_header(encoding.output_dim()))?;
    let mut rows = 0u64;
    let mut skipped = 0u64;
    let mut record = csv::StringRecord::new();
    let mut line = 0u64;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => match on_malformed {
                MalformedPolicy::Abort => return Err(e.into()),
                MalformedPolicy::SkipAndCount => {
                    skipped += 1;
                    continue;
                }
            },
        }
        line += 1;
        let attempt = (|| -> Result<(DVector<f64>, f64)> {
            let field = |idx: usize| -> Result<&str> {
                record.get(idx).ok_or_else(|| KsgdError::MalformedRow {
                    row: line,
                    reason: format!("missing column {idx}"),
                })
            };
            let mut values = Vec::with_capacity(encoding.fields.len());
            for (spec, &idx) in encoding.fields.iter().zip(&field_columns) {
                let raw = field(idx)?;
                values.push(match spec {
                    FieldSchema::Categorical { .. } => FieldValue::Categorical(raw),
                    FieldSchema::Numeric { .. } => {
                        FieldValue::Numeric(raw.trim().parse().map_err(|_| {
                            KsgdError::MalformedRow {
                                row: line,
                                reason: format!("non-numeric value {raw:?}"),
                            }
                        })?)
                    }
                });
            }
            let y: f64 = field(response_column)?.trim().parse().map_err(|_| {
                KsgdError::MalformedRow {
                    row: line,
                    reason: "non-numeric response".into(),
                }
            })?;
            Ok((encode_categoricals(&values, encoding)?, y))
        })();
        match attempt {
            Ok((features, y)) => {
                write_row(&mut out, &features, y)?;
                rows += 1;
            }
            Err(err) => match on_malformed {
                MalformedPolicy::Abort => return Err(err),
                MalformedPolicy::SkipAndCount => skipped += 1,
            },
        }
    }
    out.flush()?;
    Ok(FeaturizeReport {
        rows,
        skipped,
        out_path: out_path.clone(),
    })
}

/// Writes `features.csv` under the output directory with header
/// `f0,...,f{m-1},y`.
pub fn featurize(cfg: &ResolvedConfig) -> Result<FeaturizeReport> {
    let Some(kind) = &cfg.featurize else {
        return Err(KsgdError::Schema(
            "featurize needs featurize_kind in the config".into(),
        ));
    };
    std::fs::create_dir_all(&cfg.out)?;
    let out_path = cfg.out.join("features.csv");
    match kind {
        FeaturizeConfig::Wavelet(w) => featurize_wavelet(cfg, w, &out_path),
        FeaturizeConfig::OneHot(e) => featurize_onehot(cfg, e, &out_path),
    }
}
