//! Plot-ready output files: per-run trace CSVs, a summary CSV, and a JSON
//! manifest that echoes the resolved configuration so any run can be
//! reproduced from its outputs alone.

use std::io::Write;
use std::path::{Path, PathBuf};

use ksgd::trace::RunTrace;
use ksgd::{KsgdError, Result};
use serde::Serialize;

/// Exact column header of every trace CSV.
pub const TRACE_HEADER: &str = "method,adp,wall_seconds,objective,trace_M,gamma2";

/// Exact column header of the summary CSV.
pub const SUMMARY_HEADER: &str =
    "method,replication,final_objective,adp,wall_seconds,converged,flop_proxy,note";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one trace CSV; missing values become empty fields, never zeros.
pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for rec in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            trace.method,
            rec.adp,
            rec.wall_seconds,
            opt(rec.objective),
            opt(rec.trace_m),
            opt(rec.gamma2),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// One summary line per method and replication.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: String,
    pub replication: u64,
    pub final_objective: Option<f64>,
    pub adp: u64,
    pub wall_seconds: f64,
    pub converged: bool,
    /// Order-of-magnitude work estimate: observations assimilated times a
    /// per-observation cost model (quadratic in dimension for second-order
    /// methods, linear for first-order).
    pub flop_proxy: u64,
    /// Free-form annotation, e.g. an error message for a failed method or a
    /// rank-deficiency note from the batch oracle.
    pub note: String,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        // keep the file strictly one-field-per-comma; notes are free text
        let note: String = r
            .note
            .chars()
            .map(|c| match c {
                ',' => ';',
                '\n' | '\r' => ' ',
                '"' => '\'',
                other => other,
            })
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.replication,
            opt(r.final_objective),
            r.adp,
            r.wall_seconds,
            r.converged,
            r.flop_proxy,
            note,
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Machine-readable run manifest. Deliberately timestamp-free so reruns of
/// the same configuration differ only where wall time leaks into traces.
#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Canonical flat-TOML echo of the resolved configuration; feeding this
    /// back through `--config` reproduces the run.
    pub config_echo: String,
    pub config_hash: String,
    pub version: String,
    /// Wall-time convention: featurization is a separate cached step and is
    /// never part of a run's clock.
    pub featurization_in_wall_time: bool,
    /// Objectives are evaluated after the run from stored snapshots and do
    /// not count toward method wall time.
    pub objective_eval_in_wall_time: bool,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(echo: &str, hash: &str, outputs: Vec<String>) -> Self {
        Manifest {
            config_echo: echo.to_string(),
            config_hash: hash.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            featurization_in_wall_time: false,
            objective_eval_in_wall_time: false,
            outputs,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| KsgdError::Schema(format!("manifest serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `trace_{method}_r{replication}.csv` under the output directory.
pub fn trace_path(out: &Path, method: &str, replication: u64) -> PathBuf {
    out.join(format!("trace_{method}_r{replication}.csv"))
}
