//! Grid search over SGD learning-rate schedules.
//!
//! Each schedule runs over replication 0 of the configured data; diverging
//! schedules are recorded as failures rather than aborting the sweep, since
//! aggressive corners of the grid are expected to blow up on hard problems.

use std::time::Instant;

use ksgd::baselines::{sgd_step, SgdSchedule, SgdState};
use ksgd::data::{generate_with_noise_stream, stream_csv};
use ksgd::models::mrs_many;
use ksgd::solver::Observation;
use ksgd::Result;
use rayon::prelude::*;

use crate::config::{DataSource, ResolvedConfig};

/// Outcome of one schedule in the grid, in grid order.
#[derive(Debug, Clone)]
pub struct GridEntry {
    pub schedule: SgdSchedule,
    /// Final mean residual square over the full dataset; `None` on failure.
    pub final_objective: Option<f64>,
    pub adp: u64,
    pub wall_seconds: f64,
    pub note: String,
}

fn data_pass(
    cfg: &ResolvedConfig,
) -> Result<Box<dyn Iterator<Item = Result<Observation>> + '_>> {
    match &cfg.data {
        DataSource::Synthetic(spec) => Ok(Box::new(
            generate_with_noise_stream(spec, cfg.count, 0)?.map(Ok),
        )),
        DataSource::Csv {
            path,
            schema,
            on_malformed,
        } => Ok(Box::new(stream_csv(path, schema, *on_malformed)?)),
    }
}

fn run_schedule(cfg: &ResolvedConfig, schedule: &SgdSchedule) -> GridEntry {
    let start = Instant::now();
    let budget = cfg
        .max_obs
        .map(|m| usize::try_from(m).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    let attempt = (|| -> Result<(u64, f64)> {
        let mut state = SgdState::new(cfg.n)?;
        if let Some(b) = &cfg.beta0 {
            state.beta = b.clone();
        }
        for obs in data_pass(cfg)?.take(budget) {
            sgd_step(&mut state, &obs?, schedule)?;
        }
        let objective = mrs_many(std::slice::from_ref(&state.beta), data_pass(cfg)?)?[0];
        Ok((state.k, objective))
    })();
    match attempt {
        Ok((adp, objective)) => GridEntry {
            schedule: *schedule,
            final_objective: Some(objective),
            adp,
            wall_seconds: start.elapsed().as_secs_f64(),
            note: String::new(),
        },
        Err(err) => GridEntry {
            schedule: *schedule,
            final_objective: None,
            adp: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
            note: format!("error: {err}"),
        },
    }
}

/// Runs every schedule and returns entries in grid order.
pub fn sgd_grid_search(cfg: &ResolvedConfig, grid: &[SgdSchedule]) -> Vec<GridEntry> {
    grid.par_iter().map(|s| run_schedule(cfg, s)).collect()
}

/// Index of the entry with the lowest final objective; failures never win.
/// Ties go to the earliest grid position.
pub fn best_entry(entries: &[GridEntry]) -> Option<usize> {
    entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.final_objective.map(|v| (i, v)))
        .min_by(|(ia, va), (ib, vb)| va.total_cmp(vb).then(ia.cmp(ib)))
        .map(|(i, _)| i)
}
