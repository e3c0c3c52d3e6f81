//! Experiment configuration: a flat key-value TOML file plus command-line
//! overrides that mirror the keys one-to-one.
//!
//! Parsing happens in two stages. [`RawConfig`] is the file as written, all
//! fields optional. [`ResolvedConfig`] has every default applied and every
//! value validated; it also carries a canonical serialization of itself (the
//! "echo") so a run can be reproduced exactly from its manifest, plus a hash
//! of that echo used to label traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ksgd::data::{
    geometric_condition_profile, ColumnSelector, CsvSchema, FeatureLaw, MalformedPolicy,
    NoiseLaw, SyntheticSpec,
};
use ksgd::models::{EncodingSchema, FieldSchema, GnConfig, UnseenPolicy, WaveletConfig};
use ksgd::baselines::SgdSchedule;
use ksgd::trace::SnapshotCadence;
use ksgd::tuning::{AdaptiveParams, TuningStrategy};
use ksgd::{DVector, KsgdError, Result};
use serde::Deserialize;

/// The configuration file as written: every key optional, unknown keys
/// rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub data: Option<String>,
    pub n: Option<usize>,
    pub count: Option<u64>,
    pub beta_star: Option<Vec<f64>>,
    pub beta0: Option<Vec<f64>>,
    pub cov_scale: Option<f64>,
    pub sigma2: Option<f64>,
    pub feature_law: Option<String>,
    pub feature_half_width: Option<f64>,
    pub condition_kappa: Option<f64>,
    pub condition_profile: Option<Vec<f64>>,
    pub noise_law: Option<String>,
    pub seed: Option<u64>,

    pub csv_path: Option<String>,
    pub csv_features: Option<Vec<String>>,
    pub csv_response: Option<String>,
    pub csv_has_header: Option<bool>,
    pub csv_delimiter: Option<String>,
    pub csv_on_malformed: Option<String>,

    pub methods: Option<String>,

    pub ksgd_tuning: Option<String>,
    pub gamma2: Option<f64>,
    pub decay_p: Option<f64>,
    pub adaptive_lower: Option<f64>,
    pub adaptive_upper: Option<f64>,
    pub adaptive_threshold: Option<f64>,
    pub adaptive_delay_trace: Option<f64>,

    pub sgd_p: Option<f64>,
    pub sgd_c1: Option<f64>,
    pub sgd_c2: Option<f64>,
    pub sgd_c3: Option<f64>,

    pub gn_trace_threshold_init: Option<f64>,
    pub gn_shrink_factor: Option<f64>,
    pub gn_inner_gamma2: Option<f64>,
    pub gn_max_outer: Option<u32>,

    pub eps: Option<f64>,
    pub max_obs: Option<u64>,
    pub replications: Option<u64>,
    pub snapshot_stride: Option<u64>,
    pub out: Option<String>,

    pub featurize_kind: Option<String>,
    pub wavelet_resolutions: Option<Vec<u32>>,
    pub wavelet_intercept: Option<bool>,
    pub onehot_fields: Option<Vec<String>>,
    pub onehot_intercept: Option<bool>,
    pub onehot_unseen: Option<String>,
}

fn schema_err(msg: impl Into<String>) -> KsgdError {
    KsgdError::Schema(msg.into())
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| schema_err(format!("config parse error: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Applies one `key=value` override; keys are exactly the config keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                schema_err(format!("invalid value {value:?} for key {key:?}"))
            })
        }
        fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            value
                .split(',')
                .map(|item| parse(key, item.trim()))
                .collect()
        }
        match key {
            "data" => self.data = Some(value.to_string()),
            "n" => self.n = Some(parse(key, value)?),
            "count" => self.count = Some(parse(key, value)?),
            "beta_star" => self.beta_star = Some(parse_list(key, value)?),
            "beta0" => self.beta0 = Some(parse_list(key, value)?),
            "cov_scale" => self.cov_scale = Some(parse(key, value)?),
            "sigma2" => self.sigma2 = Some(parse(key, value)?),
            "feature_law" => self.feature_law = Some(value.to_string()),
            "feature_half_width" => self.feature_half_width = Some(parse(key, value)?),
            "condition_kappa" => self.condition_kappa = Some(parse(key, value)?),
            "condition_profile" => self.condition_profile = Some(parse_list(key, value)?),
            "noise_law" => self.noise_law = Some(value.to_string()),
            "seed" => self.seed = Some(parse(key, value)?),
            "csv_path" => self.csv_path = Some(value.to_string()),
            "csv_features" => {
                self.csv_features =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "csv_response" => self.csv_response = Some(value.to_string()),
            "csv_has_header" => self.csv_has_header = Some(parse(key, value)?),
            "csv_delimiter" => self.csv_delimiter = Some(value.to_string()),
            "csv_on_malformed" => self.csv_on_malformed = Some(value.to_string()),
            "methods" => self.methods = Some(value.to_string()),
            "ksgd_tuning" => self.ksgd_tuning = Some(value.to_string()),
            "gamma2" => self.gamma2 = Some(parse(key, value)?),
            "decay_p" => self.decay_p = Some(parse(key, value)?),
            "adaptive_lower" => self.adaptive_lower = Some(parse(key, value)?),
            "adaptive_upper" => self.adaptive_upper = Some(parse(key, value)?),
            "adaptive_threshold" => self.adaptive_threshold = Some(parse(key, value)?),
            "adaptive_delay_trace" => self.adaptive_delay_trace = Some(parse(key, value)?),
            "sgd_p" => self.sgd_p = Some(parse(key, value)?),
            "sgd_c1" => self.sgd_c1 = Some(parse(key, value)?),
            "sgd_c2" => self.sgd_c2 = Some(parse(key, value)?),
            "sgd_c3" => self.sgd_c3 = Some(parse(key, value)?),
            "gn_trace_threshold_init" => {
                self.gn_trace_threshold_init = Some(parse(key, value)?)
            }
            "gn_shrink_factor" => self.gn_shrink_factor = Some(parse(key, value)?),
            "gn_inner_gamma2" => self.gn_inner_gamma2 = Some(parse(key, value)?),
            "gn_max_outer" => self.gn_max_outer = Some(parse(key, value)?),
            "eps" => self.eps = Some(parse(key, value)?),
            "max_obs" => self.max_obs = Some(parse(key, value)?),
            "replications" => self.replications = Some(parse(key, value)?),
            "snapshot_stride" => self.snapshot_stride = Some(parse(key, value)?),
            "out" => self.out = Some(value.to_string()),
            "featurize_kind" => self.featurize_kind = Some(value.to_string()),
            "wavelet_resolutions" => {
                self.wavelet_resolutions = Some(parse_list(key, value)?)
            }
            "wavelet_intercept" => self.wavelet_intercept = Some(parse(key, value)?),
            "onehot_fields" => {
                self.onehot_fields =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "onehot_intercept" => self.onehot_intercept = Some(parse(key, value)?),
            "onehot_unseen" => self.onehot_unseen = Some(value.to_string()),
            other => return Err(schema_err(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

/// Which solver to run over the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ksgd,
    Sgd,
    Oracle,
    Gn,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Ksgd => "ksgd",
            Method::Sgd => "sgd",
            Method::Oracle => "oracle",
            Method::Gn => "gn",
        }
    }
}

/// Where observations come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        on_malformed: MalformedPolicy,
    },
}

/// Feature-caching configuration for the `featurize` subcommand.
#[derive(Debug, Clone)]
pub enum FeaturizeConfig {
    Wavelet(WaveletConfig),
    OneHot(EncodingSchema),
}

/// A fully validated configuration with all defaults applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub data: DataSource,
    /// Feature dimension.
    pub n: usize,
    /// Synthetic stream length per replication; unused for CSV sources.
    pub count: u64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub beta0: Option<DVector<f64>>,
    pub cov_scale: f64,
    pub tuning: TuningStrategy,
    pub sgd: SgdSchedule,
    pub gn: GnConfig,
    pub eps: f64,
    pub max_obs: Option<u64>,
    pub replications: u64,
    pub cadence: SnapshotCadence,
    pub out: PathBuf,
    pub featurize: Option<FeaturizeConfig>,
    /// Canonical flat-TOML serialization of this configuration.
    pub echo: String,
    /// FNV-1a digest of `echo`, used to label traces.
    pub hash: String,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn parse_variant<T: Copy>(key: &str, value: &str, table: &[(&str, T)]) -> Result<T> {
    table
        .iter()
        .find(|(name, _)| *name == value)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|&(name, _)| name).collect();
            schema_err(format!(
                "{key} must be one of {names:?}, got {value:?}"
            ))
        })
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in list.split(',') {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        let m = parse_variant(
            "methods",
            name,
            &[
                ("ksgd", Method::Ksgd),
                ("sgd", Method::Sgd),
                ("oracle", Method::Oracle),
                ("gn", Method::Gn),
            ],
        )?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(schema_err("methods must name at least one of ksgd, sgd, oracle, gn"));
    }
    Ok(methods)
}

fn parse_onehot_field(text: &str) -> Result<FieldSchema> {
    match text.split_once(':') {
        None => Ok(FieldSchema::Numeric {
            name: text.to_string(),
        }),
        Some((name, levels)) => Ok(FieldSchema::Categorical {
            name: name.to_string(),
            vocabulary: levels.split('|').map(|s| s.to_string()).collect(),
        }),
    }
}

fn column_selector(text: &str, has_header: bool, key: &str) -> Result<ColumnSelector> {
    if has_header {
        Ok(ColumnSelector::Name(text.to_string()))
    } else {
        text.parse::<usize>().map(ColumnSelector::Index).map_err(|_| {
            schema_err(format!(
                "{key}: headerless files need column indices, got {text:?}"
            ))
        })
    }
}

impl RawConfig {
    /// Validates, applies defaults, and produces the canonical echo.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut echo: BTreeMap<String, toml::Value> = BTreeMap::new();
        let f = toml::Value::Float;
        let s = |v: &str| toml::Value::String(v.to_string());
        let int = |v: u64| {
            i64::try_from(v)
                .map(toml::Value::Integer)
                .map_err(|_| schema_err(format!("integer {v} too large for the config format")))
        };

        let seed = self.seed.unwrap_or(0);
        echo.insert("seed".into(), int(seed)?);

        let data_kind = self.data.as_deref().unwrap_or("synthetic");
        let (data, n) = match data_kind {
            "synthetic" => {
                let beta_star = match (&self.beta_star, self.n) {
                    (Some(b), maybe_n) => {
                        if maybe_n.is_some_and(|n| n != b.len()) {
                            return Err(schema_err(format!(
                                "n = {} contradicts beta_star of length {}",
                                maybe_n.unwrap(),
                                b.len()
                            )));
                        }
                        DVector::from_vec(b.clone())
                    }
                    (None, Some(n)) => DVector::from_element(n, 1.0),
                    (None, None) => {
                        return Err(schema_err(
                            "synthetic data needs n or beta_star to fix the dimension",
                        ))
                    }
                };
                let n = beta_star.len();
                let sigma2 = self.sigma2.unwrap_or(1.0);
                let mut spec = SyntheticSpec::new(beta_star.clone(), sigma2, seed)?;
                spec.feature_law = match self
                    .feature_law
                    .as_deref()
                    .unwrap_or("uniform_cube")
                {
                    "uniform_cube" => FeatureLaw::UniformCube {
                        half_width: self.feature_half_width.unwrap_or(1.0),
                    },
                    "gaussian" => FeatureLaw::Gaussian,
                    other => {
                        return Err(schema_err(format!(
                            "feature_law must be uniform_cube or gaussian, got {other:?}"
                        )))
                    }
                };
                spec.noise_law = match self.noise_law.as_deref().unwrap_or("gaussian") {
                    "gaussian" => NoiseLaw::Gaussian,
                    "two_point" => NoiseLaw::TwoPoint,
                    other => {
                        return Err(schema_err(format!(
                            "noise_law must be gaussian or two_point, got {other:?}"
                        )))
                    }
                };
                spec.condition_profile = match (&self.condition_profile, self.condition_kappa) {
                    (Some(_), Some(_)) => {
                        return Err(schema_err(
                            "condition_profile and condition_kappa are mutually exclusive",
                        ))
                    }
                    (Some(p), None) => Some(DVector::from_vec(p.clone())),
                    (None, Some(kappa)) => Some(geometric_condition_profile(n, kappa)?),
                    (None, None) => None,
                };
                spec.validate()?;

                echo.insert("data".into(), s("synthetic"));
                echo.insert("n".into(), int(n as u64)?);
                echo.insert(
                    "beta_star".into(),
                    toml::Value::Array(beta_star.iter().copied().map(f).collect()),
                );
                echo.insert("sigma2".into(), f(sigma2));
                match spec.feature_law {
                    FeatureLaw::UniformCube { half_width } => {
                        echo.insert("feature_law".into(), s("uniform_cube"));
                        echo.insert("feature_half_width".into(), f(half_width));
                    }
                    FeatureLaw::Gaussian => {
                        echo.insert("feature_law".into(), s("gaussian"));
                    }
                }
                echo.insert(
                    "noise_law".into(),
                    s(match spec.noise_law {
                        NoiseLaw::Gaussian => "gaussian",
                        NoiseLaw::TwoPoint => "two_point",
                    }),
                );
                if let Some(profile) = &spec.condition_profile {
                    echo.insert(
                        "condition_profile".into(),
                        toml::Value::Array(profile.iter().copied().map(f).collect()),
                    );
                }
                (DataSource::Synthetic(spec), n)
            }
            "csv" => {
                let path = self
                    .csv_path
                    .as_deref()
                    .ok_or_else(|| schema_err("csv data needs csv_path"))?;
                let features = self
                    .csv_features
                    .as_ref()
                    .ok_or_else(|| schema_err("csv data needs csv_features"))?;
                let response = self
                    .csv_response
                    .as_deref()
                    .ok_or_else(|| schema_err("csv data needs csv_response"))?;
                let has_header = self.csv_has_header.unwrap_or(true);
                let delimiter = self.csv_delimiter.as_deref().unwrap_or(",");
                if delimiter.len() != 1 {
                    return Err(schema_err(format!(
                        "csv_delimiter must be a single byte, got {delimiter:?}"
                    )));
                }
                let on_malformed = parse_variant(
                    "csv_on_malformed",
                    self.csv_on_malformed.as_deref().unwrap_or("abort"),
                    &[
                        ("abort", MalformedPolicy::Abort),
                        ("skip", MalformedPolicy::SkipAndCount),
                    ],
                )?;
                let mut schema = CsvSchema::new(
                    features
                        .iter()
                        .map(|c| column_selector(c, has_header, "csv_features"))
                        .collect::<Result<Vec<_>>>()?,
                    column_selector(response, has_header, "csv_response")?,
                );
                schema.has_header = has_header;
                schema.delimiter = delimiter.as_bytes()[0];
                let n = schema.features.len();

                echo.insert("data".into(), s("csv"));
                echo.insert("csv_path".into(), s(path));
                echo.insert(
                    "csv_features".into(),
                    toml::Value::Array(features.iter().map(|c| s(c)).collect()),
                );
                echo.insert("csv_response".into(), s(response));
                echo.insert("csv_has_header".into(), toml::Value::Boolean(has_header));
                echo.insert("csv_delimiter".into(), s(delimiter));
                echo.insert(
                    "csv_on_malformed".into(),
                    s(match on_malformed {
                        MalformedPolicy::Abort => "abort",
                        MalformedPolicy::SkipAndCount => "skip",
                    }),
                );
                (
                    DataSource::Csv {
                        path: PathBuf::from(path),
                        schema,
                        on_malformed,
                    },
                    n,
                )
            }
            other => {
                return Err(schema_err(format!(
                    "data must be synthetic or csv, got {other:?}"
                )))
            }
        };

        let count = self.count.unwrap_or(10_000);
        echo.insert("count".into(), int(count)?);

        let methods = parse_methods(self.methods.as_deref().unwrap_or("ksgd"))?;
        echo.insert(
            "methods".into(),
            s(&methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(",")),
        );

        let beta0 = match &self.beta0 {
            Some(b) => {
                if b.len() != n {
                    return Err(schema_err(format!(
                        "beta0 has length {}, expected {n}",
                        b.len()
                    )));
                }
                echo.insert(
                    "beta0".into(),
                    toml::Value::Array(b.iter().copied().map(f).collect()),
                );
                Some(DVector::from_vec(b.clone()))
            }
            None => None,
        };
        let cov_scale = self.cov_scale.unwrap_or(1.0);
        if !(cov_scale.is_finite() && cov_scale > 0.0) {
            return Err(schema_err(format!(
                "cov_scale must be positive and finite, got {cov_scale}"
            )));
        }
        echo.insert("cov_scale".into(), f(cov_scale));

        let gamma2 = self.gamma2.unwrap_or(1.0);
        let decay_p = self.decay_p.unwrap_or(1.0);
        let adaptive_lower = self.adaptive_lower.unwrap_or(1e-4);
        let adaptive_upper = self.adaptive_upper.unwrap_or(1e4);
        let adaptive_threshold = self.adaptive_threshold.unwrap_or(10.0);
        let adaptive_delay = self.adaptive_delay_trace.unwrap_or(0.0);
        let tuning_kind = self.ksgd_tuning.as_deref().unwrap_or("fixed");
        let tuning = match tuning_kind {
            "fixed" => TuningStrategy::fixed(gamma2)?,
            "decay" => TuningStrategy::decay(decay_p)?,
            "adaptive" => TuningStrategy::adaptive(AdaptiveParams::new(
                adaptive_lower,
                adaptive_upper,
                adaptive_threshold,
                adaptive_delay,
            )?),
            other => {
                return Err(schema_err(format!(
                    "ksgd_tuning must be fixed, decay, or adaptive, got {other:?}"
                )))
            }
        };
        echo.insert("ksgd_tuning".into(), s(tuning_kind));
        echo.insert("gamma2".into(), f(gamma2));
        echo.insert("decay_p".into(), f(decay_p));
        echo.insert("adaptive_lower".into(), f(adaptive_lower));
        echo.insert("adaptive_upper".into(), f(adaptive_upper));
        echo.insert("adaptive_threshold".into(), f(adaptive_threshold));
        echo.insert("adaptive_delay_trace".into(), f(adaptive_delay));

        let sgd = SgdSchedule::new(
            self.sgd_p.unwrap_or(1.0),
            self.sgd_c1.unwrap_or(0.0),
            self.sgd_c2.unwrap_or(0.0),
            self.sgd_c3.unwrap_or(0.01),
        )?;
        echo.insert("sgd_p".into(), f(sgd.p));
        echo.insert("sgd_c1".into(), f(sgd.c1));
        echo.insert("sgd_c2".into(), f(sgd.c2));
        echo.insert("sgd_c3".into(), f(sgd.c3));

        let defaults = GnConfig::default();
        let gn = GnConfig {
            trace_threshold_init: self
                .gn_trace_threshold_init
                .unwrap_or(defaults.trace_threshold_init),
            shrink_factor: self.gn_shrink_factor.unwrap_or(defaults.shrink_factor),
            inner_gamma2: self.gn_inner_gamma2.unwrap_or(defaults.inner_gamma2),
            max_outer: self.gn_max_outer.unwrap_or(defaults.max_outer),
        };
        gn.validate()?;
        echo.insert("gn_trace_threshold_init".into(), f(gn.trace_threshold_init));
        echo.insert("gn_shrink_factor".into(), f(gn.shrink_factor));
        echo.insert("gn_inner_gamma2".into(), f(gn.inner_gamma2));
        echo.insert("gn_max_outer".into(), int(u64::from(gn.max_outer))?);

        let eps = self.eps.unwrap_or(1e-12);
        if !(eps.is_finite() && eps > 0.0) {
            return Err(schema_err(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        echo.insert("eps".into(), f(eps));

        let max_obs = self.max_obs;
        if let Some(m) = max_obs {
            echo.insert("max_obs".into(), int(m)?);
        }

        let replications = self.replications.unwrap_or(1);
        if replications == 0 {
            return Err(schema_err("replications must be at least 1"));
        }
        echo.insert("replications".into(), int(replications)?);

        let snapshot_stride = self.snapshot_stride.unwrap_or(0);
        echo.insert("snapshot_stride".into(), int(snapshot_stride)?);
        let cadence = if snapshot_stride > 0 {
            SnapshotCadence::with_stride(snapshot_stride)
        } else {
            match &data {
                DataSource::Synthetic(_) => {
                    SnapshotCadence::for_run_length(max_obs.unwrap_or(count).min(count))
                }
                // file length unknown up front; geometric checkpoints only
                DataSource::Csv { .. } => SnapshotCadence::geometric(),
            }
        };

        let out = PathBuf::from(self.out.as_deref().unwrap_or("out"));
        echo.insert("out".into(), s(self.out.as_deref().unwrap_or("out")));

        let featurize = match self.featurize_kind.as_deref() {
            None => None,
            Some("wavelet") => {
                let resolutions = self.wavelet_resolutions.as_ref().ok_or_else(|| {
                    schema_err("featurize_kind = wavelet needs wavelet_resolutions")
                })?;
                let intercept = self.wavelet_intercept.unwrap_or(true);
                echo.insert("featurize_kind".into(), s("wavelet"));
                echo.insert(
                    "wavelet_resolutions".into(),
                    toml::Value::Array(
                        resolutions
                            .iter()
                            .map(|&r| int(u64::from(r)))
                            .collect::<Result<_>>()?,
                    ),
                );
                echo.insert("wavelet_intercept".into(), toml::Value::Boolean(intercept));
                Some(FeaturizeConfig::Wavelet(WaveletConfig::new(
                    resolutions.clone(),
                    intercept,
                )?))
            }
            Some("onehot") => {
                let fields = self.onehot_fields.as_ref().ok_or_else(|| {
                    schema_err("featurize_kind = onehot needs onehot_fields")
                })?;
                let intercept = self.onehot_intercept.unwrap_or(true);
                let unseen = parse_variant(
                    "onehot_unseen",
                    self.onehot_unseen.as_deref().unwrap_or("error"),
                    &[("error", UnseenPolicy::Error), ("zeros", UnseenPolicy::Zeros)],
                )?;
                echo.insert("featurize_kind".into(), s("onehot"));
                echo.insert(
                    "onehot_fields".into(),
                    toml::Value::Array(fields.iter().map(|c| s(c)).collect()),
                );
                echo.insert("onehot_intercept".into(), toml::Value::Boolean(intercept));
                echo.insert(
                    "onehot_unseen".into(),
                    s(match unseen {
                        UnseenPolicy::Error => "error",
                        UnseenPolicy::Zeros => "zeros",
                    }),
                );
                Some(FeaturizeConfig::OneHot(EncodingSchema::new(
                    fields
                        .iter()
                        .map(|t| parse_onehot_field(t))
                        .collect::<Result<Vec<_>>>()?,
                    intercept,
                    unseen,
                )?))
            }
            Some(other) => {
                return Err(schema_err(format!(
                    "featurize_kind must be wavelet or onehot, got {other:?}"
                )))
            }
        };

        let echo_text = toml::to_string(&echo)
            .map_err(|e| schema_err(format!("config echo serialization failed: {e}")))?;
        let hash = format!("{:016x}", fnv1a64(echo_text.as_bytes()));

        Ok(ResolvedConfig {
            data,
            n,
            count,
            seed,
            methods,
            beta0,
            cov_scale,
            tuning,
            sgd,
            gn,
            eps,
            max_obs,
            replications,
            cadence,
            out,
            featurize,
            echo: echo_text,
            hash,
        })
    }
}
