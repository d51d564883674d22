//! Analysis pipeline over aggregated sweep cells.
//!
//! Everything here consumes [`CellSummary`] rows (medians over measured
//! repetitions) through the [`SweepTable`] index:
//!
//! * [`pareto`] — throughput/energy Pareto fronts and dominance verdicts;
//! * [`levers`] — power-cap inertness and clock-lock clamp detection;
//! * [`clocks`] — throughput-budget and minimum-energy clock maps plus DVFS
//!   sensitivity classification;
//! * [`energy`] — request-level energy assembly from phase measurements;
//! * [`crossover`] — sign-flip crossover search along context and output
//!   axes;
//! * [`reports`] — CSV report emission with a JSON manifest.

pub mod clocks;
pub mod crossover;
pub mod energy;
pub mod levers;
pub mod pareto;
pub mod reports;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::device::ControlLever;
use crate::num::Real;
use crate::orchestrator::CellSummary;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no cell for arch={arch} phase={phase} batch={batch} context={context} lever={lever}")]
    MissingCell {
        arch: String,
        phase: String,
        batch: u32,
        context: u32,
        lever: String,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Indexed, immutable view over aggregated sweep cells.
#[derive(Debug, Clone)]
pub struct SweepTable<R> {
    cells: Vec<CellSummary<R>>,
    index: BTreeMap<(String, &'static str, u32, u32, String), usize>,
}

impl<R: Real> SweepTable<R> {
    pub fn from_cells(cells: Vec<CellSummary<R>>) -> Self {
        let index = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    (
                        c.arch.clone(),
                        c.phase.phase_name(),
                        c.phase.batch(),
                        c.phase.context(),
                        c.lever_label.clone(),
                    ),
                    i,
                )
            })
            .collect();
        Self { cells, index }
    }

    pub fn cells(&self) -> &[CellSummary<R>] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn lookup(
        &self,
        arch: &str,
        phase: &'static str,
        batch: u32,
        context: u32,
        lever_label: &str,
    ) -> Option<&CellSummary<R>> {
        self.index
            .get(&(
                arch.to_string(),
                phase,
                batch,
                context,
                lever_label.to_string(),
            ))
            .map(|&i| &self.cells[i])
    }

    pub fn decode(
        &self,
        arch: &str,
        batch: u32,
        context: u32,
        lever_label: &str,
    ) -> Result<&CellSummary<R>, AnalysisError> {
        self.lookup(arch, "decode", batch, context, lever_label)
            .ok_or_else(|| AnalysisError::MissingCell {
                arch: arch.to_string(),
                phase: "decode".to_string(),
                batch,
                context,
                lever: lever_label.to_string(),
            })
    }

    pub fn prefill(
        &self,
        arch: &str,
        batch: u32,
        context: u32,
        lever_label: &str,
    ) -> Result<&CellSummary<R>, AnalysisError> {
        self.lookup(arch, "prefill", batch, context, lever_label)
            .ok_or_else(|| AnalysisError::MissingCell {
                arch: arch.to_string(),
                phase: "prefill".to_string(),
                batch,
                context,
                lever: lever_label.to_string(),
            })
    }

    /// Architectures present, sorted.
    pub fn arches(&self) -> Vec<String> {
        let mut v: Vec<String> = self.cells.iter().map(|c| c.arch.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Batch sizes present, sorted ascending.
    pub fn batches(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.cells.iter().map(|c| c.phase.batch()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Context lengths present, sorted ascending.
    pub fn contexts(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.cells.iter().map(|c| c.phase.context()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Lock levers that the device honoured exactly (requested == actual),
    /// deduplicated and sorted ascending by clock. These form the usable
    /// clock axis; clamped requests (e.g. above the driver ceiling) are
    /// excluded because they duplicate the ceiling entry.
    pub fn honoured_locks(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .cells
            .iter()
            .filter_map(|c| match c.lever {
                ControlLever::LockMhz { mhz } if c.actual_clock_mhz == mhz => Some(mhz),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Highest honoured lock: the reference clock all deltas compare against.
    pub fn reference_clock(&self) -> Result<u32, AnalysisError> {
        self.honoured_locks()
            .last()
            .copied()
            .ok_or_else(|| AnalysisError::InsufficientData("no honoured lock cells".into()))
    }

    /// Cap levers present, sorted ascending by watts.
    pub fn cap_levers(&self) -> Vec<R> {
        let mut v: Vec<R> = self
            .cells
            .iter()
            .filter_map(|c| match c.lever {
                ControlLever::CapW { watts } => Some(watts),
                _ => None,
            })
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("cap watts are finite"));
        v.dedup_by(|a, b| a == b);
        v
    }

    /// All decode levers (labels) available for one (arch, batch, context)
    /// row, in deterministic order.
    pub fn decode_lever_labels(&self, arch: &str, batch: u32, context: u32) -> Vec<String> {
        let mut v: Vec<String> = self
            .cells
            .iter()
            .filter(|c| {
                c.arch == arch
                    && c.phase.phase_name() == "decode"
                    && c.phase.batch() == batch
                    && c.phase.context() == context
            })
            .map(|c| c.lever_label.clone())
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

pub fn lock_label(mhz: u32) -> String {
    format!("lock_{mhz}")
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::backend::sim::SimBackend;
    use crate::device::DeviceSpec;
    use crate::orchestrator::{aggregate, plan_sweep, PhaseKind, SweepGrid};
    use crate::workload::ProfileSet;

    /// Runs a small in-memory sweep and aggregates it into a table.
    pub fn mini_table(
        arches: &[&str],
        batches: &[u32],
        contexts: &[u32],
        phases: &[PhaseKind],
    ) -> SweepTable<f64> {
        let grid = SweepGrid::<f64> {
            arches: arches.iter().map(|s| s.to_string()).collect(),
            batch_sizes: batches.to_vec(),
            context_lengths: contexts.to_vec(),
            lock_clocks_mhz: vec![390, 780, 1185, 1590, 1830, 1980],
            power_caps_w: vec![280.0, 420.0],
            include_free_run: true,
            phases: phases.to_vec(),
            decode_output_tokens: 64,
            warmup_reps: 0,
            measure_reps: 3,
            seed: 11,
        };
        let mut backend = SimBackend::new(DeviceSpec::h200(), ProfileSet::defaults());
        let mut records = Vec::new();
        for request in plan_sweep(&grid).unwrap() {
            records.push(crate::backend::Backend::run(&mut backend, &request).unwrap());
        }
        SweepTable::from_cells(aggregate(&records))
    }

    #[test]
    fn table_indexing_round_trips() {
        let t = mini_table(&["gqa"], &[1, 8], &[1024], &[PhaseKind::Decode]);
        assert_eq!(t.arches(), ["gqa"]);
        assert_eq!(t.batches(), [1, 8]);
        assert_eq!(t.contexts(), [1024]);
        assert_eq!(t.honoured_locks(), [390, 780, 1185, 1590, 1830]);
        assert_eq!(t.reference_clock().unwrap(), 1830);
        assert_eq!(t.cap_levers(), [280.0, 420.0]);
        let cell = t.decode("gqa", 8, 1024, "lock_780").unwrap();
        assert_eq!(cell.actual_clock_mhz, 780);
        assert!(t.decode("gqa", 8, 1024, "lock_9999").is_err());
        assert_eq!(t.decode_lever_labels("gqa", 1, 1024).len(), 9);
    }
}
