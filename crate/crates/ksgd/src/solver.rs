//! Streaming least-squares solver state machine.
//!
//! The state holds a parameter estimate `beta` and a scaling matrix `cov`
//! that plays the role of an estimate-covariance proxy. Each observation
//! `(x, y)` triggers a rank-one update controlled by a per-step noise scale
//! `gamma2`:
//!
//! ```text
//! v      = cov * x
//! denom  = gamma2 + x' * v
//! beta  <- beta + v * (y - beta' * x) / denom
//! cov   <- cov - v * v' / denom        (then re-symmetrized)
//! ```
//!
//! Both updates read the pre-update `cov`. Starting from the identity, the
//! scaling matrix stays symmetric positive definite with eigenvalues in
//! `(0, 1]`, its trace is nonincreasing, and after `k` steps it equals
//! `(I + sum_j x_j x_j' / gamma2_j)^{-1}` exactly in real arithmetic; see
//! [`inverse_covariance_oracle`]. The trace therefore measures how much the
//! stream has pinned the estimate down, which is what [`should_stop`] and
//! [`run_stream`] use as a stopping rule.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{KsgdError, Result};
use crate::linalg;
use crate::trace::{RunTrace, SnapshotCadence, StopReason, TraceRecord};
use crate::tuning::TuningStrategy;

/// One regression observation: feature vector `x` and response `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: DVector<f64>,
    pub y: f64,
}

impl Observation {
    /// Validates that the observation is nonempty and finite.
    pub fn new(x: DVector<f64>, y: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(KsgdError::InvalidParameter(
                "observation dimension must be positive".into(),
            ));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(KsgdError::NonFinite("observation".into()));
        }
        Ok(Observation { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Per-step diagnostics returned by [`ksgd_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Pre-update residual `y - beta' * x`.
    pub residual: f64,
    /// `gamma2 + x' * cov * x`; always at least `gamma2`.
    pub denom: f64,
    /// Vector multiplying the residual in the estimate update,
    /// `cov * x / denom`.
    pub gain: DVector<f64>,
}

/// Solver state: estimate, scaling matrix, and steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct KsgdState {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    k: u64,
}

impl KsgdState {
    /// Fresh state of dimension `n`: zero estimate, identity scaling matrix.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KsgdError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        Ok(KsgdState {
            beta: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
            k: 0,
        })
    }

    /// Fresh state starting from a caller-supplied estimate.
    pub fn with_beta(beta0: DVector<f64>) -> Result<Self> {
        if beta0.iter().any(|v| !v.is_finite()) {
            return Err(KsgdError::NonFinite("initial estimate".into()));
        }
        let mut state = KsgdState::new(beta0.len())?;
        state.beta = beta0;
        Ok(state)
    }

    /// Rescales the initial matrix to `c * I`. Only meaningful before any
    /// step has been taken; `c` expresses prior uncertainty about `beta`.
    pub fn with_cov_scale(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "covariance scale must be positive and finite, got {c}"
            )));
        }
        if self.k != 0 {
            return Err(KsgdError::InvalidParameter(
                "covariance scale can only be set before stepping".into(),
            ));
        }
        self.cov = DMatrix::identity(self.dim(), self.dim()) * c;
        Ok(self)
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Observations assimilated so far.
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Pre-update residual of `obs` against the current estimate.
    pub fn residual(&self, obs: &Observation) -> Result<f64> {
        if obs.dim() != self.dim() {
            return Err(KsgdError::DimensionMismatch {
                expected: self.dim(),
                got: obs.dim(),
            });
        }
        Ok(obs.y - self.beta.dot(&obs.x))
    }

    /// Assimilates one observation in place. See [`ksgd_step`] for the
    /// value-semantics form and the update equations.
    pub fn step_in_place(&mut self, obs: &Observation, gamma2: f64) -> Result<StepDiagnostics> {
        if !(gamma2.is_finite() && gamma2 > 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "gamma2 must be positive and finite, got {gamma2}"
            )));
        }
        if !obs.y.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
            return Err(KsgdError::NonFinite("observation".into()));
        }
        let residual = self.residual(obs)?;

        let v = &self.cov * &obs.x;
        let denom = gamma2 + obs.x.dot(&v);
        if !denom.is_finite() || !residual.is_finite() {
            return Err(KsgdError::NumericalFailure(
                "step produced non-finite intermediates".into(),
            ));
        }

        // Both updates use the pre-update matrix: v was formed before cov
        // changes, and the residual before beta changes.
        self.beta.axpy(residual / denom, &v, 1.0);
        self.cov.ger(-1.0 / denom, &v, &v, 1.0);
        linalg::symmetrize(&mut self.cov);
        self.k += 1;

        Ok(StepDiagnostics {
            residual,
            denom,
            gain: v / denom,
        })
    }

    /// Diagnostic check that the scaling matrix is still symmetric (within
    /// `1e-10` relative, spectral sense) and positive definite. Not run on
    /// the hot path; callers opt in.
    pub fn validate(&self) -> Result<()> {
        let asym = 0.5 * (&self.cov - self.cov.transpose());
        let scale = linalg::spectral_norm_sym(&self.cov);
        if linalg::spectral_norm_sym(&asym) > 1e-10 * scale {
            return Err(KsgdError::NumericalFailure(
                "scaling matrix lost symmetry".into(),
            ));
        }
        let min_eig = linalg::sym_eigenvalues(&self.cov)[0];
        if min_eig <= 0.0 {
            return Err(KsgdError::NumericalFailure(format!(
                "scaling matrix lost positive definiteness (min eigenvalue {min_eig})"
            )));
        }
        Ok(())
    }
}

/// Convenience constructor mirroring [`KsgdState::new`] /
/// [`KsgdState::with_beta`]. A supplied initial estimate must have length
/// `n`.
pub fn init_state(n: usize, beta0: Option<DVector<f64>>) -> Result<KsgdState> {
    match beta0 {
        None => KsgdState::new(n),
        Some(b) => {
            if b.len() != n {
                return Err(KsgdError::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
            KsgdState::with_beta(b)
        }
    }
}

/// Assimilates one observation, value-semantics form: the input state is
/// left untouched and an updated copy is returned along with diagnostics.
/// Costs an `O(n^2)` clone; long loops should use
/// [`KsgdState::step_in_place`].
pub fn ksgd_step(
    state: &KsgdState,
    obs: &Observation,
    gamma2: f64,
) -> Result<(KsgdState, StepDiagnostics)> {
    let mut next = state.clone();
    let diag = next.step_in_place(obs, gamma2)?;
    Ok((next, diag))
}

/// What the scaling matrix must equal after the given observations: the
/// direct inverse of `I + sum_j x_j x_j' / gamma2_j`, computed by Cholesky
/// factorization rather than by the recursion. `n` fixes the dimension so
/// the empty list is well defined (it yields the identity).
pub fn inverse_covariance_oracle(
    n: usize,
    observations: &[Observation],
    gamma2s: &[f64],
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(KsgdError::InvalidParameter(
            "dimension must be positive".into(),
        ));
    }
    if observations.len() != gamma2s.len() {
        return Err(KsgdError::DimensionMismatch {
            expected: observations.len(),
            got: gamma2s.len(),
        });
    }
    let mut acc = DMatrix::identity(n, n);
    for (obs, &g2) in observations.iter().zip(gamma2s) {
        if obs.dim() != n {
            return Err(KsgdError::DimensionMismatch {
                expected: n,
                got: obs.dim(),
            });
        }
        if !(g2.is_finite() && g2 > 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "gamma2 must be positive and finite, got {g2}"
            )));
        }
        acc.ger(1.0 / g2, &obs.x, &obs.x, 1.0);
    }
    let chol = Cholesky::new(acc).ok_or_else(|| {
        KsgdError::NumericalFailure(
            "inverse-covariance accumulation is not positive definite in working precision".into(),
        )
    })?;
    let mut m = chol.inverse();
    linalg::symmetrize(&mut m);
    Ok(m)
}

/// Stopping rule: the scaling-matrix trace has fallen to `eps` or below.
pub fn should_stop(state: &KsgdState, eps: f64) -> bool {
    state.cov_trace() <= eps
}

/// Options for [`run_stream`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Stop once the scaling-matrix trace is at or below this value.
    pub eps: f64,
    /// Optional observation budget.
    pub max_obs: Option<u64>,
    /// When to record trace snapshots; the final state is always recorded.
    pub cadence: SnapshotCadence,
}

impl RunConfig {
    pub fn new(eps: f64) -> Self {
        RunConfig {
            eps,
            max_obs: None,
            cadence: SnapshotCadence::geometric(),
        }
    }
}

/// Result of [`run_stream`].
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub state: KsgdState,
    pub trace: RunTrace,
    pub stop: StopReason,
}

/// Drives the solver over an observation stream until the stopping rule
/// fires, the budget runs out, or the stream ends. The stopping rule is
/// checked before each read, so a state that already satisfies it consumes
/// nothing. Stream errors and step errors abort the run.
///
/// The per-step noise scale comes from `tuning`, which is handed the current
/// step count, the current scaling-matrix trace, and the incoming
/// observation's pre-update residual.
pub fn run_stream<I>(
    mut state: KsgdState,
    stream: I,
    tuning: &mut TuningStrategy,
    config: &RunConfig,
) -> Result<StreamRun>
where
    I: IntoIterator<Item = Result<Observation>>,
{
    if !(config.eps.is_finite() && config.eps > 0.0) {
        return Err(KsgdError::InvalidParameter(format!(
            "eps must be positive and finite, got {}",
            config.eps
        )));
    }
    let start = Instant::now();
    let mut trace = RunTrace::default();
    let mut stream = stream.into_iter();
    let mut last_gamma2 = None;

    let stop = loop {
        if should_stop(&state, config.eps) {
            break StopReason::Converged;
        }
        if config.max_obs.is_some_and(|budget| state.k() >= budget) {
            break StopReason::Exhausted;
        }
        let Some(obs) = stream.next() else {
            break StopReason::Exhausted;
        };
        let obs = obs?;
        let residual = state.residual(&obs)?;
        let gamma2 = tuning.next_gamma2(state.k(), state.cov_trace(), Some(residual))?;
        state.step_in_place(&obs, gamma2)?;
        last_gamma2 = Some(gamma2);
        if config.cadence.due(state.k()) {
            trace.push(snapshot(&state, start, last_gamma2));
        }
    };

    trace.converged = stop == StopReason::Converged;
    trace.push(snapshot(&state, start, last_gamma2));
    Ok(StreamRun { state, trace, stop })
}

fn snapshot(state: &KsgdState, start: Instant, gamma2: Option<f64>) -> TraceRecord {
    TraceRecord {
        adp: state.k(),
        wall_seconds: start.elapsed().as_secs_f64(),
        objective: None,
        trace_m: Some(state.cov_trace()),
        gamma2,
        beta: Some(state.beta().clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_spectral_error;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(x: &[f64], y: f64) -> Observation {
        Observation::new(DVector::from_row_slice(x), y).unwrap()
    }

    #[test]
    fn fresh_state_is_zero_estimate_identity_matrix() {
        let s = init_state(2, None).unwrap();
        assert_eq!(s.beta(), &DVector::zeros(2));
        assert_eq!(s.cov(), &DMatrix::identity(2, 2));
        assert_eq!(s.k(), 0);
    }

    #[test]
    fn fresh_state_accepts_initial_estimate() {
        let s = init_state(1, Some(DVector::from_element(1, 3.0))).unwrap();
        assert_eq!(s.beta()[0], 3.0);
        assert_eq!(s.cov()[(0, 0)], 1.0);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(init_state(0, None).is_err());
        assert!(KsgdState::new(0).is_err());
    }

    #[test]
    fn mismatched_initial_estimate_is_rejected() {
        assert!(init_state(2, Some(DVector::from_element(3, 0.0))).is_err());
    }

    #[test]
    fn cov_scale_rescales_identity_start() {
        let s = KsgdState::new(2).unwrap().with_cov_scale(4.0).unwrap();
        assert_eq!(s.cov()[(0, 0)], 4.0);
        assert_eq!(s.cov()[(0, 1)], 0.0);
        assert!(KsgdState::new(2).unwrap().with_cov_scale(0.0).is_err());
    }

    #[test]
    fn scalar_step_matches_hand_computation() {
        let mut s = KsgdState::new(1).unwrap();
        let d = s.step_in_place(&obs(&[1.0], 2.0), 1.0).unwrap();
        assert_eq!(d.residual, 2.0);
        assert_eq!(d.denom, 2.0);
        assert_eq!(d.gain[0], 0.5);
        assert_eq!(s.beta()[0], 1.0);
        assert_eq!(s.cov()[(0, 0)], 0.5);
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn zero_feature_vector_changes_nothing() {
        let mut s = KsgdState::with_beta(DVector::from_row_slice(&[1.0, -2.0])).unwrap();
        let before = s.clone();
        let d = s.step_in_place(&obs(&[0.0, 0.0], 5.0), 0.25).unwrap();
        assert_eq!(s.beta(), before.beta());
        assert_eq!(s.cov(), before.cov());
        assert_eq!(s.k(), 1);
        assert_eq!(d.denom, 0.25);
        assert_eq!(d.gain, DVector::zeros(2));
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let mut s = KsgdState::new(2).unwrap();
        assert!(matches!(
            s.step_in_place(&obs(&[1.0], 0.0), 1.0),
            Err(KsgdError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(s.step_in_place(&obs(&[1.0, 0.0], 0.0), 0.0).is_err());
        assert!(s.step_in_place(&obs(&[1.0, 0.0], 0.0), -1.0).is_err());
        assert!(s.step_in_place(&obs(&[1.0, 0.0], 0.0), f64::NAN).is_err());
        let bad = Observation {
            x: DVector::from_row_slice(&[f64::NAN, 0.0]),
            y: 0.0,
        };
        assert!(s.step_in_place(&bad, 1.0).is_err());
        assert_eq!(s.k(), 0);
    }

    #[test]
    fn value_semantics_step_leaves_input_untouched() {
        let s0 = KsgdState::new(3).unwrap();
        let o = obs(&[1.0, 2.0, -1.0], 0.5);
        let (s1, d1) = ksgd_step(&s0, &o, 2.0).unwrap();
        assert_eq!(s0, KsgdState::new(3).unwrap());
        let mut s2 = s0.clone();
        let d2 = s2.step_in_place(&o, 2.0).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(d1, d2);
    }

    // Reference step written exactly as the update equations read, with the
    // scaling-matrix product formed in full. Both the estimate and the
    // matrix update must consume the pre-update matrix.
    fn reference_step(state: &KsgdState, o: &Observation, gamma2: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = state.cov();
        let v = m * &o.x;
        let denom = gamma2 + (o.x.transpose() * &v)[(0, 0)];
        let beta = state.beta() + &v * ((o.y - (o.x.transpose() * state.beta())[(0, 0)]) / denom);
        let n = state.dim();
        let mut m_next = (DMatrix::identity(n, n) - &v * o.x.transpose() / denom) * m;
        crate::linalg::symmetrize(&mut m_next);
        (beta, m_next)
    }

    #[test]
    fn step_agrees_with_full_product_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = KsgdState::new(4).unwrap();
        for _ in 0..40 {
            let o = obs(
                &[
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ],
                rng.gen_range(-3.0..3.0),
            );
            let g2 = rng.gen_range(0.05..5.0);
            let (beta_ref, m_ref) = reference_step(&s, &o, g2);
            s.step_in_place(&o, g2).unwrap();
            assert_relative_eq!(s.beta(), &beta_ref, max_relative = 1e-12, epsilon = 1e-13);
            assert!(rel_spectral_error(s.cov(), &m_ref) < 1e-12);
        }
    }

    #[test]
    fn oracle_empty_list_is_identity() {
        let m = inverse_covariance_oracle(3, &[], &[]).unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn oracle_single_unit_observation() {
        let m = inverse_covariance_oracle(1, &[obs(&[1.0], 7.0)], &[1.0]).unwrap();
        assert_relative_eq!(m[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn oracle_rejects_length_mismatch_and_bad_scale() {
        assert!(inverse_covariance_oracle(1, &[obs(&[1.0], 0.0)], &[]).is_err());
        assert!(inverse_covariance_oracle(1, &[obs(&[1.0], 0.0)], &[0.0]).is_err());
        assert!(inverse_covariance_oracle(0, &[], &[]).is_err());
    }

    #[test]
    fn recursion_tracks_direct_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mut s = KsgdState::new(n).unwrap();
        let mut seen = Vec::new();
        let mut scales = Vec::new();
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let o = obs(&x, rng.gen_range(-1.0..1.0));
            let g2 = 10f64.powf(rng.gen_range(-2.0..2.0));
            s.step_in_place(&o, g2).unwrap();
            seen.push(o);
            scales.push(g2);
        }
        let m = inverse_covariance_oracle(n, &seen, &scales).unwrap();
        assert!(rel_spectral_error(s.cov(), &m) <= 1e-9);
        s.validate().unwrap();
    }

    #[test]
    fn stop_boundary_is_inclusive() {
        let s = KsgdState::new(3).unwrap();
        assert!(should_stop(&s, 4.0));
        assert!(should_stop(&s, 3.0));
        assert!(!should_stop(&s, 1.0));
    }

    #[test]
    fn empty_stream_returns_initial_state_exhausted() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        let run = run_stream(
            KsgdState::new(2).unwrap(),
            std::iter::empty(),
            &mut tuning,
            &RunConfig::new(0.01),
        )
        .unwrap();
        assert_eq!(run.stop, StopReason::Exhausted);
        assert!(!run.trace.converged);
        assert_eq!(run.state.k(), 0);
        assert_eq!(run.state.beta(), &DVector::zeros(2));
    }

    #[test]
    fn satisfied_stopping_rule_consumes_nothing() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        let stream = vec![Ok(obs(&[1.0, 0.0], 1.0))];
        let n = 2;
        let run = run_stream(
            KsgdState::new(n).unwrap(),
            stream,
            &mut tuning,
            &RunConfig::new(n as f64),
        )
        .unwrap();
        assert_eq!(run.stop, StopReason::Converged);
        assert!(run.trace.converged);
        assert_eq!(run.state.k(), 0);
    }

    #[test]
    fn budget_caps_observation_count() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        let stream = (0..100).map(|_| Ok(obs(&[1.0], 1.0)));
        let mut config = RunConfig::new(1e-12);
        config.max_obs = Some(7);
        let run = run_stream(KsgdState::new(1).unwrap(), stream, &mut tuning, &config).unwrap();
        assert_eq!(run.state.k(), 7);
        assert_eq!(run.stop, StopReason::Exhausted);
    }

    #[test]
    fn stream_errors_abort_the_run() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        let stream = vec![
            Ok(obs(&[1.0], 1.0)),
            Err(KsgdError::MalformedRow {
                row: 2,
                reason: "bad cell".into(),
            }),
        ];
        let out = run_stream(
            KsgdState::new(1).unwrap(),
            stream,
            &mut tuning,
            &RunConfig::new(1e-12),
        );
        assert!(matches!(out, Err(KsgdError::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn run_stream_rejects_bad_eps() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        for eps in [0.0, -1.0, f64::NAN] {
            let out = run_stream(
                KsgdState::new(1).unwrap(),
                std::iter::empty(),
                &mut tuning,
                &RunConfig::new(eps),
            );
            assert!(out.is_err());
        }
    }

    #[test]
    fn trace_records_final_state_and_cadence_points() {
        let mut tuning = TuningStrategy::fixed(1.0).unwrap();
        let stream = (0..10).map(|i| Ok(obs(&[(i as f64 * 0.7).sin()], 1.0)));
        let mut config = RunConfig::new(1e-12);
        config.max_obs = Some(10);
        let run = run_stream(KsgdState::new(1).unwrap(), stream, &mut tuning, &config).unwrap();
        let adps: Vec<u64> = run.trace.records.iter().map(|r| r.adp).collect();
        assert_eq!(adps, vec![1, 2, 4, 8, 10]);
        let last = run.trace.records.last().unwrap();
        assert_eq!(last.gamma2, Some(1.0));
        assert!(last.trace_m.unwrap() > 0.0);
        assert!(last.beta.is_some());
    }
}
