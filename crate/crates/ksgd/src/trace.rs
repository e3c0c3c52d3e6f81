//! Run traces: per-snapshot records of solver progress.
//!
//! A trace records assimilated-data-point counts (ADP), wall time, and
//! solver diagnostics at a configurable cadence. Objectives are usually
//! filled in after the run from the stored parameter snapshots, so that the
//! reported objective depends only on the snapshot and the dataset.

use nalgebra::DVector;

/// One snapshot row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Number of observations assimilated when the snapshot was taken.
    pub adp: u64,
    /// Seconds elapsed since the run started.
    pub wall_seconds: f64,
    /// Objective value at the stored parameters, if it has been evaluated.
    pub objective: Option<f64>,
    /// Trace of the solver's scaling matrix, when the method tracks one.
    pub trace_m: Option<f64>,
    /// Noise-scale parameter in effect at the snapshot, when applicable.
    pub gamma2: Option<f64>,
    /// Parameter estimate at the snapshot; retained for post-hoc objective
    /// evaluation and never serialized.
    pub beta: Option<DVector<f64>>,
}

/// How a streaming run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The stopping rule fired.
    Converged,
    /// The stream ended or the observation budget ran out first.
    Exhausted,
}

/// A labeled sequence of snapshot records with strictly increasing ADP.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    /// Method label, e.g. `"ksgd"`; written to the trace CSV.
    pub method: String,
    /// Digest of the configuration that produced the run.
    pub config_hash: String,
    /// Whether the run ended by its stopping rule rather than exhaustion.
    pub converged: bool,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn new(method: impl Into<String>) -> Self {
        RunTrace {
            method: method.into(),
            ..Default::default()
        }
    }

    /// Appends a record, keeping ADP strictly increasing: a record with an
    /// ADP not larger than the last one is ignored (this collapses the
    /// duplicate snapshot the cadence and the final flush would otherwise
    /// both produce).
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            if record.adp <= last.adp {
                return;
            }
        }
        self.records.push(record);
    }

    /// Fills each record's objective by evaluating `objective` at its
    /// stored parameters. Records without parameters are left untouched.
    pub fn evaluate_objective<F>(&mut self, mut objective: F)
    where
        F: FnMut(&DVector<f64>) -> f64,
    {
        for rec in &mut self.records {
            if let Some(beta) = &rec.beta {
                rec.objective = Some(objective(beta));
            }
        }
    }
}

/// Snapshot cadence: geometric checkpoints (powers of two) plus an optional
/// fixed stride. The final state of a run is always recorded regardless of
/// cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotCadence {
    /// Record at every ADP that is a power of two.
    pub geometric: bool,
    /// Record at every multiple of this stride; `None` disables.
    pub stride: Option<u64>,
}

impl SnapshotCadence {
    /// Geometric checkpoints only.
    pub fn geometric() -> Self {
        SnapshotCadence {
            geometric: true,
            stride: None,
        }
    }

    /// Geometric checkpoints plus every `stride` observations.
    /// A zero stride is treated as disabled.
    pub fn with_stride(stride: u64) -> Self {
        SnapshotCadence {
            geometric: true,
            stride: (stride > 0).then_some(stride),
        }
    }

    /// No intermediate snapshots; only the final state is recorded.
    pub fn final_only() -> Self {
        SnapshotCadence {
            geometric: false,
            stride: None,
        }
    }

    /// Default stride for a run of `count` observations: `max(1, count/200)`,
    /// keeping trace files around two hundred rows plus the geometric points.
    pub fn for_run_length(count: u64) -> Self {
        Self::with_stride((count / 200).max(1))
    }

    /// Whether a snapshot is due after assimilating observation `adp`.
    pub fn due(&self, adp: u64) -> bool {
        if adp == 0 {
            return false;
        }
        if self.geometric && adp.is_power_of_two() {
            return true;
        }
        match self.stride {
            Some(s) => adp.is_multiple_of(s),
            None => false,
        }
    }
}
