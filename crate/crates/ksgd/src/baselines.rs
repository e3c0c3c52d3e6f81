//! Baselines: plain SGD with a piecewise learning-rate schedule, and exact
//! batch least squares via a row-streaming orthogonal factorization.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{KsgdError, Result};
use crate::solver::Observation;

/// Piecewise learning-rate schedule:
///
/// ```text
/// eta(k) = c1                  for k <= c2
///          c3 / (k - c2)^p     for k >  c2
/// ```
///
/// with `k` counted from 1. `c2 = 0` gives a pure decay schedule;
/// `c2 = +inf` a constant rate `c1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSchedule {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl SgdSchedule {
    pub fn new(p: f64, c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "decay exponent must lie in (0, 1], got {p}"
            )));
        }
        if !(c1.is_finite() && c1 >= 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "plateau rate must be nonnegative and finite, got {c1}"
            )));
        }
        if c2.is_nan() || c2 < 0.0 {
            return Err(KsgdError::InvalidParameter(format!(
                "plateau length must be nonnegative (possibly infinite), got {c2}"
            )));
        }
        if !(c3.is_finite() && c3 >= 0.0) {
            return Err(KsgdError::InvalidParameter(format!(
                "decay coefficient must be nonnegative and finite, got {c3}"
            )));
        }
        Ok(SgdSchedule { p, c1, c2, c3 })
    }

    /// Learning rate at 1-based step `k`.
    pub fn eta(&self, k: u64) -> f64 {
        let k = k as f64;
        if k <= self.c2 {
            self.c1
        } else {
            self.c3 / (k - self.c2).powf(self.p)
        }
    }
}

/// Default schedule grid for picking an SGD baseline by final objective:
/// every combination of `p` in {0.5, 0.75, 1}, `c3` in {1e-3, 1e-2, 1e-1, 1},
/// `c1` in {0, 1e-2}, and `c2` in {0, 1e5}.
pub fn default_schedule_grid() -> Vec<SgdSchedule> {
    let mut grid = Vec::with_capacity(48);
    for &p in &[0.5, 0.75, 1.0] {
        for &c3 in &[1e-3, 1e-2, 1e-1, 1.0] {
            for &c1 in &[0.0, 1e-2] {
                for &c2 in &[0.0, 1e5] {
                    grid.push(SgdSchedule { p, c1, c2, c3 });
                }
            }
        }
    }
    grid
}

/// SGD iterate and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub beta: DVector<f64>,
    pub k: u64,
}

impl SgdState {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KsgdError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        Ok(SgdState {
            beta: DVector::zeros(n),
            k: 0,
        })
    }
}

/// One SGD step on the squared-error loss:
/// `beta <- beta + eta(k+1) * x * (y - beta' x)`.
pub fn sgd_step(state: &mut SgdState, obs: &Observation, schedule: &SgdSchedule) -> Result<()> {
    if obs.dim() != state.beta.len() {
        return Err(KsgdError::DimensionMismatch {
            expected: state.beta.len(),
            got: obs.dim(),
        });
    }
    let scale = schedule.eta(state.k + 1) * (obs.y - state.beta.dot(&obs.x));
    if !scale.is_finite() {
        return Err(KsgdError::NumericalFailure(
            "SGD update is non-finite; the schedule has diverged".into(),
        ));
    }
    state.beta.axpy(scale, &obs.x, 1.0);
    if state.beta.iter().any(|v| !v.is_finite()) {
        return Err(KsgdError::NumericalFailure(
            "SGD iterate overflowed; the schedule has diverged".into(),
        ));
    }
    state.k += 1;
    Ok(())
}

/// Exact least squares from a fitted [`StreamingQr`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub beta: DVector<f64>,
    /// True when the design matrix is rank deficient; `beta` is then the
    /// minimum-norm solution.
    pub rank_deficient: bool,
    pub rank: usize,
    pub rows: u64,
}

/// Row-streaming QR accumulator: maintains the triangular factor and the
/// rotated response with Givens rotations, so memory is `O(n^2)` regardless
/// of how many rows pass through.
#[derive(Debug, Clone)]
pub struct StreamingQr {
    r: DMatrix<f64>,
    qtb: DVector<f64>,
    rows: u64,
}

impl StreamingQr {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KsgdError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        Ok(StreamingQr {
            r: DMatrix::zeros(n, n),
            qtb: DVector::zeros(n),
            rows: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.qtb.len()
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    /// Rotates one row into the triangular factor.
    pub fn push(&mut self, obs: &Observation) -> Result<()> {
        let n = self.dim();
        if obs.dim() != n {
            return Err(KsgdError::DimensionMismatch {
                expected: n,
                got: obs.dim(),
            });
        }
        let mut w = obs.x.clone();
        let mut b = obs.y;
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let (c, s) = givens(self.r[(i, i)], w[i]);
            for j in i..n {
                let rij = self.r[(i, j)];
                let wj = w[j];
                self.r[(i, j)] = c * rij + s * wj;
                w[j] = -s * rij + c * wj;
            }
            let qi = self.qtb[i];
            self.qtb[i] = c * qi + s * b;
            b = -s * qi + c * b;
        }
        self.rows += 1;
        Ok(())
    }

    /// Solves the accumulated least-squares problem. A rank-deficient factor
    /// falls back to the minimum-norm solution (via SVD of the small
    /// triangular factor) and is flagged.
    pub fn solve(&self) -> Result<LeastSquaresFit> {
        if self.rows == 0 {
            return Err(KsgdError::EmptyData(
                "least squares needs at least one observation",
            ));
        }
        let n = self.dim();
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(self.r[(i, i)].abs()));
        let tol = f64::EPSILON * max_diag * n as f64;
        let deficient = (0..n).any(|i| self.r[(i, i)].abs() <= tol);

        if !deficient {
            let mut beta = self.qtb.clone();
            for i in (0..n).rev() {
                for j in (i + 1)..n {
                    beta[i] -= self.r[(i, j)] * beta[j];
                }
                beta[i] /= self.r[(i, i)];
            }
            return Ok(LeastSquaresFit {
                beta,
                rank_deficient: false,
                rank: n,
                rows: self.rows,
            });
        }

        let svd = SVD::new(self.r.clone(), true, true);
        let sv_max = svd.singular_values.iter().fold(0.0f64, |a, &v| a.max(v));
        let sv_tol = f64::EPSILON * sv_max * n as f64;
        let rank = svd.singular_values.iter().filter(|&&v| v > sv_tol).count();
        let beta = svd
            .solve(&self.qtb, sv_tol)
            .map_err(|e| KsgdError::NumericalFailure(e.to_string()))?;
        Ok(LeastSquaresFit {
            beta,
            rank_deficient: true,
            rank,
            rows: self.rows,
        })
    }
}

/// `(c, s)` zeroing the second component of `(a, b)`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Batch least squares over a finite stream, processed row by row. The
/// dimension is taken from the first observation.
pub fn batch_least_squares<I>(stream: I) -> Result<LeastSquaresFit>
where
    I: IntoIterator<Item = Result<Observation>>,
{
    let mut qr: Option<StreamingQr> = None;
    for obs in stream {
        let obs = obs?;
        let qr = match &mut qr {
            Some(qr) => qr,
            None => qr.get_or_insert(StreamingQr::new(obs.dim())?),
        };
        qr.push(&obs)?;
    }
    qr.ok_or(KsgdError::EmptyData(
        "least squares needs at least one observation",
    ))?
    .solve()
}
