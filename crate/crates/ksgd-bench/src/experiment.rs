//! Experiment driver: runs each configured method over each replication's
//! data, fills objectives in after the fact from stored snapshots, and
//! produces traces plus a summary table.
//!
//! Replication-and-method pairs run as independent parallel tasks; a failing
//! method is recorded in its summary row without disturbing the others.

use std::time::Instant;

use ksgd::baselines::{batch_least_squares, sgd_step, SgdState};
use ksgd::data::{generate_with_noise_stream, stream_csv};
use ksgd::models::{gn_logistic_fit, mrs_many};
use ksgd::solver::{run_stream, KsgdState, Observation, RunConfig};
use ksgd::trace::{RunTrace, StopReason, TraceRecord};
use ksgd::{DVector, Result};
use rayon::prelude::*;

use crate::config::{DataSource, Method, ResolvedConfig};
use crate::output::{
    trace_path, write_manifest, write_summary_csv, write_trace_csv, Manifest, SummaryRow,
};

/// All artifacts of one experiment, in deterministic (replication, method)
/// order.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub traces: Vec<RunTrace>,
    pub summary: Vec<SummaryRow>,
}

/// Per-observation work estimate used for the flop-proxy column: quadratic
/// in dimension for the second-order methods, linear for plain SGD.
pub fn flops_per_obs(method: Method, n: u64) -> u64 {
    match method {
        Method::Ksgd => 3 * n * n + 6 * n,
        Method::Sgd => 4 * n,
        Method::Oracle => 3 * n * n,
        Method::Gn => 3 * n * n + 10 * n,
    }
}

/// A fresh pass over one replication's full dataset.
fn data_iter(
    cfg: &ResolvedConfig,
    replication: u64,
) -> Result<Box<dyn Iterator<Item = Result<Observation>> + '_>> {
    match &cfg.data {
        DataSource::Synthetic(spec) => Ok(Box::new(
            generate_with_noise_stream(spec, cfg.count, replication)?.map(Ok),
        )),
        DataSource::Csv {
            path,
            schema,
            on_malformed,
        } => Ok(Box::new(stream_csv(path, schema, *on_malformed)?)),
    }
}

fn budget(cfg: &ResolvedConfig) -> usize {
    cfg.max_obs
        .map(|m| usize::try_from(m).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX)
}

fn run_ksgd(cfg: &ResolvedConfig, replication: u64) -> Result<(RunTrace, SummaryRow)> {
    let state = match &cfg.beta0 {
        Some(b) => KsgdState::with_beta(b.clone())?,
        None => KsgdState::new(cfg.n)?,
    }
    .with_cov_scale(cfg.cov_scale)?;
    let mut tuning = cfg.tuning.clone();
    let run_config = RunConfig {
        eps: cfg.eps,
        max_obs: cfg.max_obs,
        cadence: cfg.cadence,
    };
    let run = run_stream(state, data_iter(cfg, replication)?, &mut tuning, &run_config)?;
    let wall = run
        .trace
        .records
        .last()
        .map(|r| r.wall_seconds)
        .unwrap_or(0.0);
    let summary = SummaryRow {
        method: Method::Ksgd.label().into(),
        replication,
        final_objective: None,
        adp: run.state.k(),
        wall_seconds: wall,
        converged: run.stop == StopReason::Converged,
        flop_proxy: run.state.k() * flops_per_obs(Method::Ksgd, cfg.n as u64),
        note: String::new(),
    };
    Ok((run.trace, summary))
}

fn run_sgd(cfg: &ResolvedConfig, replication: u64) -> Result<(RunTrace, SummaryRow)> {
    let start = Instant::now();
    let mut state = SgdState::new(cfg.n)?;
    if let Some(b) = &cfg.beta0 {
        state.beta = b.clone();
    }
    let mut trace = RunTrace::new(Method::Sgd.label());
    for obs in data_iter(cfg, replication)?.take(budget(cfg)) {
        let obs = obs?;
        sgd_step(&mut state, &obs, &cfg.sgd)?;
        if cfg.cadence.due(state.k) {
            trace.push(TraceRecord {
                adp: state.k,
                wall_seconds: start.elapsed().as_secs_f64(),
                objective: None,
                trace_m: None,
                gamma2: None,
                beta: Some(state.beta.clone()),
            });
        }
    }
    trace.push(TraceRecord {
        adp: state.k,
        wall_seconds: start.elapsed().as_secs_f64(),
        objective: None,
        trace_m: None,
        gamma2: None,
        beta: Some(state.beta.clone()),
    });
    let summary = SummaryRow {
        method: Method::Sgd.label().into(),
        replication,
        final_objective: None,
        adp: state.k,
        wall_seconds: start.elapsed().as_secs_f64(),
        converged: false,
        flop_proxy: state.k * flops_per_obs(Method::Sgd, cfg.n as u64),
        note: String::new(),
    };
    Ok((trace, summary))
}

fn run_oracle(cfg: &ResolvedConfig, replication: u64) -> Result<(RunTrace, SummaryRow)> {
    let start = Instant::now();
    let fit = batch_least_squares(data_iter(cfg, replication)?.take(budget(cfg)))?;
    let wall = start.elapsed().as_secs_f64();
    let mut trace = RunTrace::new(Method::Oracle.label());
    trace.converged = true;
    trace.push(TraceRecord {
        adp: fit.rows,
        wall_seconds: wall,
        objective: None,
        trace_m: None,
        gamma2: None,
        beta: Some(fit.beta.clone()),
    });
    let summary = SummaryRow {
        method: Method::Oracle.label().into(),
        replication,
        final_objective: None,
        adp: fit.rows,
        wall_seconds: wall,
        converged: true,
        flop_proxy: fit.rows * flops_per_obs(Method::Oracle, cfg.n as u64),
        note: if fit.rank_deficient {
            format!("rank_deficient rank={}", fit.rank)
        } else {
            String::new()
        },
    };
    Ok((trace, summary))
}

fn run_gn(cfg: &ResolvedConfig, replication: u64) -> Result<(RunTrace, SummaryRow)> {
    let data: Vec<Observation> = data_iter(cfg, replication)?
        .take(budget(cfg))
        .collect::<Result<_>>()?;
    let fit = gn_logistic_fit(&data, &cfg.gn)?;
    let wall = fit
        .trace
        .records
        .last()
        .map(|r| r.wall_seconds)
        .unwrap_or(0.0);
    let summary = SummaryRow {
        method: Method::Gn.label().into(),
        replication,
        final_objective: fit.trace.records.last().and_then(|r| r.objective),
        adp: fit.adp,
        wall_seconds: wall,
        converged: fit.trace.converged,
        flop_proxy: fit.adp * flops_per_obs(Method::Gn, cfg.n as u64),
        note: String::new(),
    };
    Ok((fit.trace, summary))
}

/// Fills trace objectives from stored snapshots with one pass over the
/// replication's full dataset; the fitter for logistic runs records its own
/// objective, so those traces are left untouched.
fn fill_objectives(cfg: &ResolvedConfig, replication: u64, trace: &mut RunTrace) -> Result<()> {
    if trace.method == Method::Gn.label() {
        return Ok(());
    }
    let slots: Vec<usize> = trace
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.beta.is_some())
        .map(|(i, _)| i)
        .collect();
    if slots.is_empty() {
        return Ok(());
    }
    let betas: Vec<DVector<f64>> = slots
        .iter()
        .map(|&i| trace.records[i].beta.clone().unwrap())
        .collect();
    let values = mrs_many(&betas, data_iter(cfg, replication)?)?;
    for (&i, value) in slots.iter().zip(values) {
        trace.records[i].objective = Some(value);
    }
    Ok(())
}

fn run_task(cfg: &ResolvedConfig, method: Method, replication: u64) -> (RunTrace, SummaryRow) {
    let outcome = match method {
        Method::Ksgd => run_ksgd(cfg, replication),
        Method::Sgd => run_sgd(cfg, replication),
        Method::Oracle => run_oracle(cfg, replication),
        Method::Gn => run_gn(cfg, replication),
    };
    let (mut trace, mut summary) = match outcome {
        Ok(pair) => pair,
        Err(err) => {
            // record the failure and keep going with the other methods
            let mut trace = RunTrace::new(method.label());
            trace.config_hash = cfg.hash.clone();
            return (
                trace,
                SummaryRow {
                    method: method.label().into(),
                    replication,
                    final_objective: None,
                    adp: 0,
                    wall_seconds: 0.0,
                    converged: false,
                    flop_proxy: 0,
                    note: format!("error: {err}"),
                },
            );
        }
    };
    trace.method = method.label().into();
    trace.config_hash = cfg.hash.clone();
    if let Err(err) = fill_objectives(cfg, replication, &mut trace) {
        summary.note = format!("objective evaluation failed: {err}");
    } else if summary.final_objective.is_none() {
        summary.final_objective = trace.records.last().and_then(|r| r.objective);
    }
    (trace, summary)
}

/// Runs every configured method over every replication.
pub fn run_experiment(cfg: &ResolvedConfig) -> Result<ExperimentOutput> {
    let tasks: Vec<(u64, Method)> = (0..cfg.replications)
        .flat_map(|rep| cfg.methods.iter().map(move |&m| (rep, m)))
        .collect();
    let results: Vec<(RunTrace, SummaryRow)> = tasks
        .par_iter()
        .map(|&(rep, method)| run_task(cfg, method, rep))
        .collect();
    let (traces, summary) = results.into_iter().unzip();
    Ok(ExperimentOutput { traces, summary })
}

/// Runs the experiment and writes traces, summary, and manifest under the
/// configured output directory. Returns the output for further inspection.
pub fn run_and_emit(cfg: &ResolvedConfig) -> Result<ExperimentOutput> {
    let output = run_experiment(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut files = Vec::new();
    for (trace, row) in output.traces.iter().zip(&output.summary) {
        let path = trace_path(&cfg.out, &trace.method, row.replication);
        write_trace_csv(&path, trace)?;
        files.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    write_summary_csv(&cfg.out.join("summary.csv"), &output.summary)?;
    files.push("summary.csv".into());
    files.push("manifest.json".into());
    let manifest = Manifest::new(&cfg.echo, &cfg.hash, files);
    write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    Ok(output)
}
