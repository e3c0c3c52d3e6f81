//! Model-side utilities: the mean-residual-square objective, Haar wavelet
//! featurization, one-hot encoding of mixed records, and a Gauss-Newton
//! driver that fits logistic regression by solving a sequence of weighted
//! least-squares subproblems with the streaming solver.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{KsgdError, Result};
use crate::solver::{KsgdState, Observation};
use crate::trace::{RunTrace, TraceRecord};
use crate::tuning::TuningStrategy;

/// Mean residual square `(1/N) * sum (y - beta' x)^2`.
pub fn mrs(beta: &DVector<f64>, data: &[Observation]) -> Result<f64> {
    if data.is_empty() {
        return Err(KsgdError::EmptyData("objective needs at least one observation"));
    }
    let mut acc = 0.0;
    for obs in data {
        if obs.dim() != beta.len() {
            return Err(KsgdError::DimensionMismatch {
                expected: beta.len(),
                got: obs.dim(),
            });
        }
        let r = obs.y - beta.dot(&obs.x);
        acc += r * r;
    }
    Ok(acc / data.len() as f64)
}

/// Mean residual square of several parameter vectors in one pass over a
/// stream; memory stays bounded by the number of parameter vectors.
pub fn mrs_many<I>(betas: &[DVector<f64>], stream: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = Result<Observation>>,
{
    let mut acc = vec![0.0f64; betas.len()];
    let mut count = 0u64;
    for obs in stream {
        let obs = obs?;
        for (a, beta) in acc.iter_mut().zip(betas) {
            if beta.len() != obs.dim() {
                return Err(KsgdError::DimensionMismatch {
                    expected: beta.len(),
                    got: obs.dim(),
                });
            }
            let r = obs.y - beta.dot(&obs.x);
            *a += r * r;
        }
        count += 1;
    }
    if count == 0 {
        return Err(KsgdError::EmptyData("objective needs at least one observation"));
    }
    Ok(acc.into_iter().map(|a| a / count as f64).collect())
}

/// Dyadic Haar featurization: one wavelet per scale, no translates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveletConfig {
    /// Number of dyadic scales per raw variable.
    pub resolutions: Vec<u32>,
    pub include_intercept: bool,
}

impl WaveletConfig {
    pub fn new(resolutions: Vec<u32>, include_intercept: bool) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(KsgdError::InvalidParameter(
                "at least one raw variable is required".into(),
            ));
        }
        if resolutions.iter().any(|&r| r == 0 || r > 52) {
            return Err(KsgdError::InvalidParameter(
                "resolutions must lie in 1..=52".into(),
            ));
        }
        Ok(WaveletConfig {
            resolutions,
            include_intercept,
        })
    }

    /// Output length: optional intercept plus the sum of the resolutions.
    pub fn output_dim(&self) -> usize {
        usize::from(self.include_intercept)
            + self.resolutions.iter().map(|&r| r as usize).sum::<usize>()
    }
}

/// Square-wave value of the Haar mother wavelet at `t` in `[0, 1)`:
/// `+1` on the left half-interval, `-1` on the right.
fn haar_psi(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Expands `[0, 1]`-valued raw variables into dyadic Haar features: variable
/// `u` with resolution `r` contributes the square waves at scales
/// `2^0 .. 2^(r-1)`, each evaluated at the fractional part of `2^j * u`.
/// Output values are `+/-1` plus an optional leading intercept of `1`.
pub fn haar_features(raw: &[f64], config: &WaveletConfig) -> Result<DVector<f64>> {
    if raw.len() != config.resolutions.len() {
        return Err(KsgdError::DimensionMismatch {
            expected: config.resolutions.len(),
            got: raw.len(),
        });
    }
    let mut out = Vec::with_capacity(config.output_dim());
    if config.include_intercept {
        out.push(1.0);
    }
    for (&u, &r) in raw.iter().zip(&config.resolutions) {
        if !(0.0..=1.0).contains(&u) {
            return Err(KsgdError::Domain(format!(
                "raw inputs must lie in [0, 1], got {u}"
            )));
        }
        for j in 0..r {
            let t = ((j as f64).exp2() * u).fract();
            out.push(haar_psi(t));
        }
    }
    Ok(DVector::from_vec(out))
}

/// One field of a mixed record.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue<'a> {
    Categorical(&'a str),
    Numeric(f64),
}

/// Declared type of one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldSchema {
    /// One-hot encoded over the full vocabulary, one indicator per level.
    Categorical { name: String, vocabulary: Vec<String> },
    /// Passed through unchanged.
    Numeric { name: String },
}

/// What to do with a categorical level missing from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnseenPolicy {
    Error,
    /// Encode as all zeros.
    Zeros,
}

/// Field layout for [`encode_categoricals`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingSchema {
    pub fields: Vec<FieldSchema>,
    pub include_intercept: bool,
    pub unseen: UnseenPolicy,
}

impl EncodingSchema {
    pub fn new(
        fields: Vec<FieldSchema>,
        include_intercept: bool,
        unseen: UnseenPolicy,
    ) -> Result<Self> {
        if fields.is_empty() {
            return Err(KsgdError::InvalidParameter(
                "at least one field is required".into(),
            ));
        }
        for field in &fields {
            if let FieldSchema::Categorical { name, vocabulary } = field {
                if vocabulary.is_empty() {
                    return Err(KsgdError::InvalidParameter(format!(
                        "field {name:?} has an empty vocabulary"
                    )));
                }
                let unique: std::collections::BTreeSet<&String> = vocabulary.iter().collect();
                if unique.len() != vocabulary.len() {
                    return Err(KsgdError::InvalidParameter(format!(
                        "field {name:?} has duplicate vocabulary levels"
                    )));
                }
            }
        }
        Ok(EncodingSchema {
            fields,
            include_intercept,
            unseen,
        })
    }

    /// Output length: optional intercept, one slot per vocabulary level of
    /// each categorical field, one per numeric field.
    pub fn output_dim(&self) -> usize {
        usize::from(self.include_intercept)
            + self
                .fields
                .iter()
                .map(|f| match f {
                    FieldSchema::Categorical { vocabulary, .. } => vocabulary.len(),
                    FieldSchema::Numeric { .. } => 1,
                })
                .sum::<usize>()
    }
}

/// Encodes one mixed record into a numeric feature vector following the
/// schema's field order. Deterministic: equal records encode equally.
pub fn encode_categoricals(record: &[FieldValue], schema: &EncodingSchema) -> Result<DVector<f64>> {
    if record.len() != schema.fields.len() {
        return Err(KsgdError::DimensionMismatch {
            expected: schema.fields.len(),
            got: record.len(),
        });
    }
    let mut out = Vec::with_capacity(schema.output_dim());
    if schema.include_intercept {
        out.push(1.0);
    }
    for (value, field) in record.iter().zip(&schema.fields) {
        match (value, field) {
            (FieldValue::Categorical(level), FieldSchema::Categorical { name, vocabulary }) => {
                let hit = vocabulary.iter().position(|v| v == level);
                match (hit, schema.unseen) {
                    (Some(pos), _) => {
                        out.extend((0..vocabulary.len()).map(|i| f64::from(i == pos)));
                    }
                    (None, UnseenPolicy::Zeros) => {
                        out.extend(std::iter::repeat_n(0.0, vocabulary.len()));
                    }
                    (None, UnseenPolicy::Error) => {
                        return Err(KsgdError::Domain(format!(
                            "unseen level {level:?} for field {name:?}"
                        )));
                    }
                }
            }
            (FieldValue::Numeric(v), FieldSchema::Numeric { name }) => {
                if !v.is_finite() {
                    return Err(KsgdError::NonFinite(format!("field {name:?}")));
                }
                out.push(*v);
            }
            (_, FieldSchema::Categorical { name, .. })
            | (_, FieldSchema::Numeric { name }) => {
                return Err(KsgdError::Domain(format!(
                    "field {name:?} value does not match its declared type"
                )));
            }
        }
    }
    Ok(DVector::from_vec(out))
}

/// Numerically stable `1 / (1 + exp(-t))`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of logistic regression with 0/1 responses.
pub fn mean_nll(beta: &DVector<f64>, data: &[Observation]) -> Result<f64> {
    if data.is_empty() {
        return Err(KsgdError::EmptyData("objective needs at least one observation"));
    }
    let mut acc = 0.0;
    for obs in data {
        if obs.dim() != beta.len() {
            return Err(KsgdError::DimensionMismatch {
                expected: beta.len(),
                got: obs.dim(),
            });
        }
        let eta = beta.dot(&obs.x);
        // log(1 + exp(eta)) - y * eta, evaluated without overflow
        acc += eta.max(0.0) + (-eta.abs()).exp().ln_1p() - obs.y * eta;
    }
    Ok(acc / data.len() as f64)
}

/// Weighted working observation of the Gauss-Newton subproblem linearized
/// at `beta_bar`: weight `w = p(1-p)`, working response
/// `z = beta_bar' x + (y - p) / w`, both folded into the observation as
/// `(sqrt(w) x, sqrt(w) z)`. Returns `None` when the weight underflows
/// (below `1e-12`), in which case the observation carries no curvature.
pub fn gn_working_observation(
    beta_bar: &DVector<f64>,
    obs: &Observation,
) -> Result<Option<Observation>> {
    if obs.dim() != beta_bar.len() {
        return Err(KsgdError::DimensionMismatch {
            expected: beta_bar.len(),
            got: obs.dim(),
        });
    }
    let eta = beta_bar.dot(&obs.x);
    let p = sigmoid(eta);
    let w = p * (1.0 - p);
    if w < 1e-12 {
        return Ok(None);
    }
    let z = eta + (obs.y - p) / w;
    let sw = w.sqrt();
    Ok(Some(Observation {
        x: &obs.x * sw,
        y: sw * z,
    }))
}

/// Gauss-Newton configuration. The trace threshold of the first subproblem
/// shrinks by `shrink_factor` after each subproblem, tightening the inner
/// solves as the linearization point improves.
#[derive(Debug, Clone, PartialEq)]
pub struct GnConfig {
    pub trace_threshold_init: f64,
    pub shrink_factor: f64,
    /// Noise scale of the inner solver when no tuning strategy is supplied.
    pub inner_gamma2: f64,
    pub max_outer: u32,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig {
            trace_threshold_init: 15.0,
            shrink_factor: 5.0,
            inner_gamma2: 0.1,
            max_outer: 10,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trace_threshold_init.is_finite() && self.trace_threshold_init > 0.0) {
            return Err(KsgdError::InvalidParameter(
                "trace threshold must be positive and finite".into(),
            ));
        }
        if !(self.shrink_factor.is_finite() && self.shrink_factor > 1.0) {
            return Err(KsgdError::InvalidParameter(
                "shrink factor must exceed 1".into(),
            ));
        }
        if !(self.inner_gamma2.is_finite() && self.inner_gamma2 > 0.0) {
            return Err(KsgdError::InvalidParameter(
                "inner gamma2 must be positive and finite".into(),
            ));
        }
        if self.max_outer == 0 {
            return Err(KsgdError::InvalidParameter(
                "at least one outer iteration is required".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`gn_logistic_fit`].
#[derive(Debug, Clone)]
pub struct GnFit {
    pub beta: DVector<f64>,
    /// One record per completed subproblem; the objective column carries the
    /// mean negative log-likelihood at that point.
    pub trace: RunTrace,
    pub subproblems: u32,
    /// Observations consumed across all inner solves, including
    /// degenerate-weight skips.
    pub adp: u64,
}

/// Fits logistic regression by Gauss-Newton with the streaming solver on
/// each weighted subproblem, using a constant inner noise scale of
/// `config.inner_gamma2`.
pub fn gn_logistic_fit(data: &[Observation], config: &GnConfig) -> Result<GnFit> {
    let tuning = TuningStrategy::fixed(config.inner_gamma2)?;
    gn_logistic_fit_with_tuning(data, config, &tuning)
}

/// [`gn_logistic_fit`] with an explicit inner tuning strategy; each
/// subproblem starts from a fresh clone of it.
///
/// Each subproblem linearizes at the current estimate, restarts the scaling
/// matrix at the identity, warm-starts the inner estimate, and consumes one
/// pass over `data` at most, stopping early once the scaling-matrix trace
/// falls to the subproblem's threshold. The outer loop ends after
/// `max_outer` subproblems, or at the first subproblem that exhausts its
/// pass without reaching its threshold (the trace is marked unconverged).
pub fn gn_logistic_fit_with_tuning(
    data: &[Observation],
    config: &GnConfig,
    tuning: &TuningStrategy,
) -> Result<GnFit> {
    config.validate()?;
    if data.is_empty() {
        return Err(KsgdError::EmptyData("logistic fit needs observations"));
    }
    let n = data[0].dim();
    for obs in data {
        if obs.dim() != n {
            return Err(KsgdError::DimensionMismatch {
                expected: n,
                got: obs.dim(),
            });
        }
        if obs.y != 0.0 && obs.y != 1.0 {
            return Err(KsgdError::Domain(format!(
                "logistic responses must be 0 or 1, got {}",
                obs.y
            )));
        }
    }

    let start = Instant::now();
    let mut trace = RunTrace::new("gn");
    let mut beta_bar = DVector::zeros(n);
    let mut adp = 0u64;
    let mut subproblems = 0u32;
    let mut threshold = config.trace_threshold_init;
    let mut converged = true;

    'outer: for _ in 0..config.max_outer {
        let mut inner = KsgdState::with_beta(beta_bar.clone())?;
        let mut inner_tuning = tuning.clone();
        let mut hit_threshold = false;
        let mut last_gamma2 = None;
        for obs in data {
            if inner.cov_trace() <= threshold {
                hit_threshold = true;
                break;
            }
            adp += 1;
            let Some(working) = gn_working_observation(&beta_bar, obs)? else {
                continue;
            };
            let residual = inner.residual(&working)?;
            let gamma2 = inner_tuning.next_gamma2(inner.k(), inner.cov_trace(), Some(residual))?;
            inner.step_in_place(&working, gamma2)?;
            last_gamma2 = Some(gamma2);
        }
        // a pass that ended by exhaustion may still have reached the
        // threshold exactly at the last observation
        hit_threshold = hit_threshold || inner.cov_trace() <= threshold;

        beta_bar = inner.beta().clone();
        subproblems += 1;
        trace.push(TraceRecord {
            adp,
            wall_seconds: start.elapsed().as_secs_f64(),
            objective: Some(mean_nll(&beta_bar, data)?),
            trace_m: Some(inner.cov_trace()),
            gamma2: last_gamma2,
            beta: Some(beta_bar.clone()),
        });
        threshold /= config.shrink_factor;

        if !hit_threshold {
            converged = false;
            break 'outer;
        }
    }

    trace.converged = converged;
    Ok(GnFit {
        beta: beta_bar,
        trace,
        subproblems,
        adp,
    })
}
