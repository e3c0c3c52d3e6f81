//! Per-step noise-scale policies.
//!
//! The solver takes a noise scale `gamma2` at every step; this module
//! supplies the three policies the benchmarks use. `Fixed` and
//! `AdaptiveSoftThreshold` keep the emitted scale inside a positive bounded
//! interval, which is the regime the solver's covariance-tracking behavior
//! relies on. `Decay` walks the scale to zero and is provided for
//! experimentation; nothing is guaranteed about covariance tracking there.
//!
//! The adaptive policy estimates the residual variance online. It stays
//! dormant (emitting the upper bound `U`) until the scaling-matrix trace
//! falls to `delay_trace`, so that early residuals, which are dominated by
//! estimate error rather than noise, never enter the variance estimate.
//! Once active it maintains a forgetting-weighted running mean of squared
//! residuals and clamps it into `[L, U]`:
//!
//! ```text
//! f    = 1 / (1 + exp(trace_m - threshold))      (forgetting factor)
//! xi2 <- f * r^2                                  (first active step)
//! xi2 <- f * r^2 / c + (1 - 1/c) * xi2            (step c = 2, 3, ...)
//! gamma2 = min(U, max(L, xi2))
//! ```

use crate::error::{KsgdError, Result};

/// State of the adaptive policy. `xi2` is the running variance estimate and
/// `count` the number of residuals absorbed into it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveParams {
    /// Lower clamp bound `L`; positive.
    pub lower: f64,
    /// Upper clamp bound `U`; at least `lower`.
    pub upper: f64,
    /// Soft-threshold pivot `T` for the forgetting factor.
    pub threshold: f64,
    /// Adaptation stays dormant until the scaling-matrix trace falls to this
    /// value; `0` starts adaptation immediately.
    pub delay_trace: f64,
    /// Running residual-variance estimate.
    pub xi2: f64,
    /// Residuals absorbed so far.
    pub count: u64,
    /// Whether the delay trigger has fired.
    pub active: bool,
}

impl AdaptiveParams {
    pub fn new(lower: f64, upper: f64, threshold: f64, delay_trace: f64) -> Result<Self> {
        if !(lower.is_finite() && lower > 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "lower bound must be positive and finite, got {lower}"
            )));
        }
        if !(upper.is_finite() && upper >= lower) {
            return Err(KsgdError::InvalidParameter(format!(
                "upper bound must be finite and at least the lower bound, got {upper}"
            )));
        }
        if !threshold.is_finite() {
            return Err(KsgdError::InvalidParameter(
                "threshold must be finite".into(),
            ));
        }
        if !(delay_trace.is_finite() && delay_trace >= 0.0) {
            return Err(KsgdError::InvalidParameter(
                "delay trace must be nonnegative and finite".into(),
            ));
        }
        Ok(AdaptiveParams {
            lower,
            upper,
            threshold,
            delay_trace,
            xi2: 0.0,
            count: 0,
            active: delay_trace == 0.0,
        })
    }
}

/// Noise-scale policy handed to the solver loop.
#[derive(Debug, Clone, PartialEq)]
pub enum TuningStrategy {
    /// Constant scale.
    Fixed { gamma2: f64 },
    /// `gamma2 = (k+1)^{-p}` with `p` in `(0, 1]`, 1-based in the step
    /// index. Decays to zero, so the bounded-scale guarantees do not apply;
    /// experimental.
    Decay { p: f64 },
    /// Delayed, forgetting-weighted residual-variance tracker; see the
    /// module docs.
    AdaptiveSoftThreshold(AdaptiveParams),
}

impl TuningStrategy {
    pub fn fixed(gamma2: f64) -> Result<Self> {
        if !(gamma2.is_finite() && gamma2 > 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "gamma2 must be positive and finite, got {gamma2}"
            )));
        }
        Ok(TuningStrategy::Fixed { gamma2 })
    }

    pub fn decay(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "decay exponent must lie in (0, 1], got {p}"
            )));
        }
        Ok(TuningStrategy::Decay { p })
    }

    pub fn adaptive(params: AdaptiveParams) -> Self {
        TuningStrategy::AdaptiveSoftThreshold(params)
    }

    /// Noise scale for the step about to assimilate observation `state_k`
    /// (zero-based count of steps taken so far). `trace_m` is the current
    /// scaling-matrix trace and `last_residual` the pre-update residual of
    /// the incoming observation; the adaptive policy requires the residual
    /// once active.
    pub fn next_gamma2(
        &mut self,
        state_k: u64,
        trace_m: f64,
        last_residual: Option<f64>,
    ) -> Result<f64> {
        match self {
            TuningStrategy::Fixed { gamma2 } => Ok(*gamma2),
            TuningStrategy::Decay { p } => Ok(((state_k + 1) as f64).powf(-*p)),
            TuningStrategy::AdaptiveSoftThreshold(params) => {
                if !params.active && trace_m <= params.delay_trace {
                    params.active = true;
                }
                if !params.active {
                    return Ok(params.upper);
                }
                let residual = last_residual.ok_or_else(|| {
                    KsgdError::InvalidParameter(
                        "adaptive tuning requires the pre-update residual once active".into(),
                    )
                })?;
                xi_update(params, residual, trace_m)?;
                phi_clamp(params.xi2, params.lower, params.upper)
            }
        }
    }
}

/// Clamps `x` into `[lower, upper]`: `min(upper, max(lower, x))`.
pub fn phi_clamp(x: f64, lower: f64, upper: f64) -> Result<f64> {
    // NaN bounds must fail too, not just inverted ones
    if lower.is_nan() || upper.is_nan() || lower > upper {
        return Err(KsgdError::InvalidParameter(format!(
            "clamp interval is empty: [{lower}, {upper}]"
        )));
    }
    Ok(x.max(lower).min(upper))
}

/// Forgetting factor `1 / (1 + exp(trace_m - threshold))`.
///
/// Close to 1 while `trace_m` is well below the threshold, close to 0 well
/// above it. Saturates cleanly at the floating-point extremes: `exp`
/// overflow yields exactly `0.0`, never a NaN.
pub fn soft_threshold_forget(trace_m: f64, threshold: f64) -> f64 {
    1.0 / (1.0 + (trace_m - threshold).exp())
}

/// Absorbs one squared residual into the running variance estimate.
pub fn xi_update(params: &mut AdaptiveParams, residual: f64, trace_m: f64) -> Result<()> {
    if !residual.is_finite() {
        return Err(KsgdError::NonFinite("residual".into()));
    }
    let f = soft_threshold_forget(trace_m, params.threshold);
    params.count += 1;
    if params.count == 1 {
        params.xi2 = f * residual * residual;
    } else {
        let c = params.count as f64;
        params.xi2 = f * residual * residual / c + (1.0 - 1.0 / c) * params.xi2;
    }
    Ok(())
}
