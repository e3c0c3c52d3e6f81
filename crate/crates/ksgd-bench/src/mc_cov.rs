//! Monte-Carlo estimation of the solver's true error covariance.
//!
//! All replications share the same feature stream and differ only in noise,
//! so the scaling matrix M_k is common to every replication and the
//! across-replication average of (beta_k - beta*)(beta_k - beta*)^T can be
//! compared against it directly.

use ksgd::data::generate_with_noise_stream;
use ksgd::solver::KsgdState;
use ksgd::tuning::TuningStrategy;
use ksgd::{DMatrix, DVector, KsgdError, Result};
use rayon::prelude::*;

use crate::config::{DataSource, ResolvedConfig};

/// The common scaling matrix and the empirical error covariance at one
/// snapshot count.
#[derive(Debug, Clone)]
pub struct CovSnapshot {
    pub k: u64,
    /// Scaling matrix, identical across replications by construction.
    pub m: DMatrix<f64>,
    /// Across-replication average of the outer product of the error.
    pub mhat: DMatrix<f64>,
}

/// Snapshot counts: powers of two up to the stream length, plus the end.
fn snapshot_points(count: u64) -> Vec<u64> {
    let mut points: Vec<u64> = (0..63)
        .map(|e| 1u64 << e)
        .take_while(|&k| k < count)
        .collect();
    if count > 0 {
        points.push(count);
    }
    points
}

fn run_one_replication(
    cfg: &ResolvedConfig,
    replication: u64,
    points: &[u64],
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        unreachable!("validated by caller");
    };
    let mut state = match &cfg.beta0 {
        Some(b) => KsgdState::with_beta(b.clone())?,
        None => KsgdState::new(cfg.n)?,
    }
    .with_cov_scale(cfg.cov_scale)?;
    let mut tuning = cfg.tuning.clone();
    let mut snapshots = Vec::with_capacity(points.len());
    let mut next = 0usize;
    for obs in generate_with_noise_stream(spec, cfg.count, replication)? {
        let gamma2 = tuning.next_gamma2(state.k(), state.cov_trace(), None)?;
        state.step_in_place(&obs, gamma2)?;
        while next < points.len() && points[next] == state.k() {
            snapshots.push((state.beta().clone(), state.cov().clone()));
            next += 1;
        }
    }
    if snapshots.len() != points.len() {
        return Err(KsgdError::EmptyData("stream ended before the last snapshot"));
    }
    Ok(snapshots)
}

/// Runs `replications` noise-independent copies of the stream and averages
/// the error outer products at geometric snapshot counts.
///
/// Only synthetic sources are supported (the true coefficients must be
/// known), and only data-independent tuning (fixed or decaying): an adaptive
/// scale reacts to residuals, which would give each replication its own
/// scaling matrix.
pub fn monte_carlo_covariance(
    cfg: &ResolvedConfig,
    replications: u64,
) -> Result<Vec<CovSnapshot>> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        return Err(KsgdError::InvalidParameter(
            "covariance estimation needs a synthetic source: the true coefficients of a CSV file are unknown".into(),
        ));
    };
    if matches!(cfg.tuning, TuningStrategy::AdaptiveSoftThreshold(_)) {
        return Err(KsgdError::InvalidParameter(
            "covariance estimation needs a data-independent noise scale (fixed or decay); adaptive tuning would desynchronize the scaling matrix across replications".into(),
        ));
    }
    if replications == 0 {
        return Err(KsgdError::InvalidParameter(
            "at least one replication is required".into(),
        ));
    }
    let beta_star = spec.beta_star.clone();
    let points = snapshot_points(cfg.count);

    let per_rep: Vec<Vec<(DVector<f64>, DMatrix<f64>)>> = (0..replications)
        .into_par_iter()
        .map(|rep| run_one_replication(cfg, rep, &points))
        .collect::<Result<_>>()?;

    let mut result = Vec::with_capacity(points.len());
    for (i, &k) in points.iter().enumerate() {
        let m = per_rep[0][i].1.clone();
        let mut mhat = DMatrix::zeros(cfg.n, cfg.n);
        for rep in &per_rep {
            // shared features mean a shared scaling matrix, bit for bit
            if rep[i].1 != m {
                return Err(KsgdError::NumericalFailure(
                    "scaling matrix differs across replications sharing a feature stream".into(),
                ));
            }
            let err = &rep[i].0 - &beta_star;
            mhat.ger(1.0, &err, &err, 1.0);
        }
        mhat /= replications as f64;
        result.push(CovSnapshot { k, m, mhat });
    }
    Ok(result)
}
