//! Data sources: a seeded synthetic linear-model generator and a streaming
//! CSV reader. Both yield observations one at a time in bounded memory.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{KsgdError, Result};
use crate::solver::Observation;

/// Marginal law of the feature coordinates (iid across coordinates, before
/// the optional per-coordinate scaling).
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureLaw {
    /// Uniform on `[-half_width, half_width]`; bounded features with
    /// per-coordinate second moment `half_width^2 / 3`.
    UniformCube { half_width: f64 },
    /// Standard normal.
    Gaussian,
}

/// Noise distribution; both are mean-zero with variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    /// `+sigma` or `-sigma` with equal probability.
    TwoPoint,
}

/// Recipe for a synthetic stream `y = beta_star' x + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub beta_star: DVector<f64>,
    /// Noise variance; zero gives a noiseless stream.
    pub sigma2: f64,
    pub feature_law: FeatureLaw,
    /// Optional positive per-coordinate scales applied to the raw feature
    /// draw; this is how ill-conditioned second-moment matrices are built.
    pub condition_profile: Option<DVector<f64>>,
    pub noise_law: NoiseLaw,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Uniform-cube features on `[-1, 1]`, Gaussian noise, no scaling.
    pub fn new(beta_star: DVector<f64>, sigma2: f64, seed: u64) -> Result<Self> {
        let spec = SyntheticSpec {
            beta_star,
            sigma2,
            feature_law: FeatureLaw::UniformCube { half_width: 1.0 },
            condition_profile: None,
            noise_law: NoiseLaw::Gaussian,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_star.is_empty() {
            return Err(KsgdError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        if self.beta_star.iter().any(|v| !v.is_finite()) {
            return Err(KsgdError::NonFinite("beta_star".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "sigma2 must be nonnegative and finite, got {}",
                self.sigma2
            )));
        }
        if let FeatureLaw::UniformCube { half_width } = self.feature_law {
            if !(half_width.is_finite() && half_width > 0.0) {
                return Err(KsgdError::InvalidParameter(format!(
                    "half_width must be positive and finite, got {half_width}"
                )));
            }
        }
        if let Some(profile) = &self.condition_profile {
            if profile.len() != self.dim() {
                return Err(KsgdError::DimensionMismatch {
                    expected: self.dim(),
                    got: profile.len(),
                });
            }
            if profile.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(KsgdError::InvalidParameter(
                    "condition profile entries must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Closed-form second-moment matrix `Q = E[x x']` of the feature vector,
/// including the condition profile. Diagonal for both supported laws.
pub fn closed_form_q(spec: &SyntheticSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let base = match spec.feature_law {
        FeatureLaw::UniformCube { half_width } => half_width * half_width / 3.0,
        FeatureLaw::Gaussian => 1.0,
    };
    let mut diag = DVector::from_element(spec.dim(), base);
    if let Some(profile) = &spec.condition_profile {
        for (d, s) in diag.iter_mut().zip(profile.iter()) {
            *d *= s * s;
        }
    }
    Ok(DMatrix::from_diagonal(&diag))
}

/// Geometric per-coordinate scale profile whose second-moment matrix has
/// condition number exactly `kappa`: `s_i = kappa^(i / (2(n-1)))`.
pub fn geometric_condition_profile(n: usize, kappa: f64) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(KsgdError::InvalidParameter(
            "dimension must be positive".into(),
        ));
    }
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(KsgdError::InvalidParameter(format!(
            "condition number must be at least 1, got {kappa}"
        )));
    }
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    Ok(DVector::from_iterator(
        n,
        (0..n).map(|i| kappa.powf(i as f64 / (2.0 * (n - 1) as f64))),
    ))
}

/// Seeded synthetic observation stream. Features and noise come from two
/// independent generator streams derived from the same seed, so replications
/// can share the exact feature sequence while redrawing the noise; see
/// [`generate_with_noise_stream`].
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    spec: SyntheticSpec,
    x_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    remaining: u64,
}

impl SyntheticStream {
    fn draw(&mut self) -> Observation {
        let n = self.spec.dim();
        let mut x = DVector::zeros(n);
        match self.spec.feature_law {
            FeatureLaw::UniformCube { half_width } => {
                for v in x.iter_mut() {
                    *v = self.x_rng.gen_range(-half_width..=half_width);
                }
            }
            FeatureLaw::Gaussian => {
                for v in x.iter_mut() {
                    *v = StandardNormal.sample(&mut self.x_rng);
                }
            }
        }
        if let Some(profile) = &self.spec.condition_profile {
            x.component_mul_assign(profile);
        }
        let eps = if self.spec.sigma2 == 0.0 {
            0.0
        } else {
            let sigma = self.spec.sigma2.sqrt();
            match self.spec.noise_law {
                NoiseLaw::Gaussian => {
                    let z: f64 = StandardNormal.sample(&mut self.noise_rng);
                    sigma * z
                }
                NoiseLaw::TwoPoint => {
                    if self.noise_rng.gen::<bool>() {
                        sigma
                    } else {
                        -sigma
                    }
                }
            }
        };
        let y = self.spec.beta_star.dot(&x) + eps;
        Observation { x, y }
    }
}

impl Iterator for SyntheticStream {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.draw())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// `count` observations drawn from `spec.seed`. Deterministic: the same
/// `SyntheticSpec` yields a bit-identical stream every time.
pub fn generate(spec: &SyntheticSpec, count: u64) -> Result<SyntheticStream> {
    generate_with_noise_stream(spec, count, 0)
}

/// Like [`generate`], but draws the noise from generator stream
/// `noise_stream`. Streams with different `noise_stream` values share the
/// identical feature sequence and differ only in the noise, which is what a
/// shared-design Monte-Carlo replication needs.
pub fn generate_with_noise_stream(
    spec: &SyntheticSpec,
    count: u64,
    noise_stream: u64,
) -> Result<SyntheticStream> {
    spec.validate()?;
    let mut x_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    x_rng.set_stream(0);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(
        noise_stream
            .checked_add(1)
            .ok_or_else(|| KsgdError::InvalidParameter("noise stream index overflow".into()))?,
    );
    Ok(SyntheticStream {
        spec: spec.clone(),
        x_rng,
        noise_rng,
        remaining: count,
    })
}

/// Selects a CSV column by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

/// Which columns make up an observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub features: Vec<ColumnSelector>,
    pub response: ColumnSelector,
    /// Whether the file starts with a header row. Name selectors require it.
    pub has_header: bool,
    pub delimiter: u8,
}

impl CsvSchema {
    pub fn new(features: Vec<ColumnSelector>, response: ColumnSelector) -> Self {
        CsvSchema {
            features,
            response,
            has_header: true,
            delimiter: b',',
        }
    }
}

/// What to do with a row that cannot be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MalformedPolicy {
    /// Stop the stream with an error identifying the row.
    Abort,
    /// Drop the row and keep a count; see [`CsvStream::skipped`].
    SkipAndCount,
}

/// Streaming CSV observation source. Holds one row buffer; memory use does
/// not grow with file length.
pub struct CsvStream {
    reader: csv::Reader<File>,
    record: csv::StringRecord,
    feature_idx: Vec<usize>,
    response_idx: usize,
    policy: MalformedPolicy,
    skipped: u64,
    row: u64,
    done: bool,
}

impl CsvStream {
    /// Rows dropped so far under [`MalformedPolicy::SkipAndCount`].
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn parse_current(&self) -> std::result::Result<Observation, String> {
        let cell = |idx: usize| -> std::result::Result<f64, String> {
            let raw = self
                .record
                .get(idx)
                .ok_or_else(|| format!("missing column {idx}"))?;
            let value: f64 = raw
                .trim()
                .parse()
                .map_err(|_| format!("non-numeric cell {raw:?} in column {idx}"))?;
            if !value.is_finite() {
                return Err(format!("non-finite cell in column {idx}"));
            }
            Ok(value)
        };
        let mut x = DVector::zeros(self.feature_idx.len());
        for (slot, &idx) in x.iter_mut().zip(&self.feature_idx) {
            *slot = cell(idx)?;
        }
        let y = cell(self.response_idx)?;
        Ok(Observation { x, y })
    }
}

impl Iterator for CsvStream {
    type Item = Result<Observation>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.reader.read_record(&mut self.record) {
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Ok(false) => {
                    self.done = true;
                    return None;
                }
                Ok(true) => {
                    self.row += 1;
                    match self.parse_current() {
                        Ok(obs) => return Some(Ok(obs)),
                        Err(reason) => match self.policy {
                            MalformedPolicy::SkipAndCount => {
                                self.skipped += 1;
                                continue;
                            }
                            MalformedPolicy::Abort => {
                                self.done = true;
                                return Some(Err(KsgdError::MalformedRow {
                                    row: self.row,
                                    reason,
                                }));
                            }
                        },
                    }
                }
            }
        }
    }
}

/// Opens a CSV observation stream. Schema problems (no features, a response
/// column that is also a feature, a name selector without a header, a name
/// missing from the header) fail here, before anything is yielded.
pub fn stream_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    policy: MalformedPolicy,
) -> Result<CsvStream> {
    if schema.features.is_empty() {
        return Err(KsgdError::Schema("no feature columns selected".into()));
    }
    let file = File::open(path.as_ref())?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter)
        .flexible(true)
        .from_reader(file);

    let resolve = |sel: &ColumnSelector, header: Option<&csv::StringRecord>| -> Result<usize> {
        match sel {
            ColumnSelector::Index(i) => Ok(*i),
            ColumnSelector::Name(name) => {
                let header = header.ok_or_else(|| {
                    KsgdError::Schema(format!(
                        "column {name:?} selected by name but the file has no header"
                    ))
                })?;
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| KsgdError::Schema(format!("column {name:?} not in header")))
            }
        }
    };

    let header = if schema.has_header {
        Some(reader.headers()?.clone())
    } else {
        None
    };
    let feature_idx: Vec<usize> = schema
        .features
        .iter()
        .map(|sel| resolve(sel, header.as_ref()))
        .collect::<Result<_>>()?;
    let response_idx = resolve(&schema.response, header.as_ref())?;
    if feature_idx.contains(&response_idx) {
        return Err(KsgdError::Schema(
            "response column is also selected as a feature".into(),
        ));
    }

    Ok(CsvStream {
        reader,
        record: csv::StringRecord::new(),
        feature_idx,
        response_idx,
        policy,
        skipped: 0,
        row: 0,
        done: false,
    })
}
