//! Lever behaviour detection: power-cap inertness and clock-lock clamping.
//!
//! Serving-class decode draws far less than the device TDP, so configured
//! power caps frequently never bind — the driver holds the base clock and
//! the cap is *inert*. Inert caps are indistinguishable from the base lock
//! in every measured axis, which is exactly why cap-based tuning fails for
//! this regime. Lock requests above the driver ceiling silently settle at
//! the ceiling; detecting that clamp prevents mislabelled sweep axes.

use serde::{Deserialize, Serialize};

use crate::device::ControlLever;
use crate::num::Real;

use super::{lock_label, AnalysisError, SweepTable};

/// How one cap behaved for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapVerdict {
    /// Cap configured but never engaged: clock and power match the base lock.
    Inert,
    /// Cap engaged: the clock dropped to meet the cap.
    Binding,
    /// Clock sat below base even though the draw never approached the cap;
    /// a transient throttle event unrelated to the cap.
    ThrottleArtefact,
}

/// One cap observation, decoupled from the sweep table so externally
/// collected rows (e.g. a bring-up fixture CSV) can be classified too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapObservation<R> {
    pub cap_w: R,
    pub actual_clock_mhz: u32,
    pub avg_power_w: R,
}

/// Classifies one cap observation against the base-lock behaviour.
///
/// A sub-base clock only counts as a binding cap when the base-clock draw
/// actually exceeds the cap; otherwise the cap cannot have been the cause
/// and the event is tagged as a throttle artefact.
pub fn classify_cap_observation<R: Real>(
    obs: &CapObservation<R>,
    base_clock_mhz: u32,
    base_power_w: R,
) -> CapVerdict {
    if obs.actual_clock_mhz >= base_clock_mhz {
        CapVerdict::Inert
    } else if base_power_w > obs.cap_w {
        CapVerdict::Binding
    } else {
        CapVerdict::ThrottleArtefact
    }
}

/// Aggregate inertness of one cap across an architecture's decode cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapInertnessReport<R> {
    pub arch: String,
    pub cap_w: R,
    pub cells: usize,
    pub inert_cells: usize,
    pub binding_cells: usize,
    pub artefact_cells: usize,
    /// True when the cap never engaged anywhere on the grid.
    pub all_inert: bool,
    /// Largest base-clock draw observed, i.e. the headroom evidence.
    pub max_base_power_w: R,
}

/// Classifies every configured cap for every architecture over the decode
/// grid, comparing each cap cell against the base-lock cell of the same
/// (batch, context) point.
pub fn detect_cap_inertness<R: Real>(
    table: &SweepTable<R>,
) -> Result<Vec<CapInertnessReport<R>>, AnalysisError> {
    let reference = table.reference_clock()?;
    let base_label = lock_label(reference);
    let mut reports = Vec::new();
    for arch in table.arches() {
        for cap in table.cap_levers() {
            let cap_label = ControlLever::CapW { watts: cap }.label();
            let mut report = CapInertnessReport {
                arch: arch.clone(),
                cap_w: cap,
                cells: 0,
                inert_cells: 0,
                binding_cells: 0,
                artefact_cells: 0,
                all_inert: true,
                max_base_power_w: R::zero(),
            };
            for batch in table.batches() {
                for context in table.contexts() {
                    let Ok(cap_cell) = table.decode(&arch, batch, context, &cap_label) else {
                        continue;
                    };
                    let base_cell = table.decode(&arch, batch, context, &base_label)?;
                    let obs = CapObservation {
                        cap_w: cap,
                        actual_clock_mhz: cap_cell.actual_clock_mhz,
                        avg_power_w: cap_cell.median_power_w,
                    };
                    let verdict = classify_cap_observation(
                        &obs,
                        base_cell.actual_clock_mhz,
                        base_cell.median_power_w,
                    );
                    report.cells += 1;
                    report.max_base_power_w = report.max_base_power_w.max(base_cell.median_power_w);
                    match verdict {
                        CapVerdict::Inert => report.inert_cells += 1,
                        CapVerdict::Binding => {
                            report.binding_cells += 1;
                            report.all_inert = false;
                        }
                        CapVerdict::ThrottleArtefact => {
                            report.artefact_cells += 1;
                            report.all_inert = false;
                        }
                    }
                }
            }
            if report.cells > 0 {
                reports.push(report);
            }
        }
    }
    Ok(reports)
}

/// Lock-request clamping observed for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampReport {
    pub arch: String,
    /// Highest clock any lock request actually achieved.
    pub ceiling_mhz: u32,
    /// (requested, actual) for every lock lever.
    pub pairs: Vec<(u32, u32)>,
    /// Requests that were silently clamped (actual != requested).
    pub clamped_requests: Vec<u32>,
    /// Clock reached without any lever, when a free-run cell exists.
    pub free_run_clock_mhz: Option<u32>,
}

/// Detects lock clamping from the decode cells of one architecture at one
/// representative (batch, context) point (clamping is workload-independent,
/// so any point serves).
pub fn detect_clock_clamp<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
) -> Result<ClampReport, AnalysisError> {
    let batch = *table
        .batches()
        .first()
        .ok_or_else(|| AnalysisError::InsufficientData("empty table".into()))?;
    let context = *table
        .contexts()
        .first()
        .ok_or_else(|| AnalysisError::InsufficientData("empty table".into()))?;
    let mut pairs = Vec::new();
    let mut free_run_clock_mhz = None;
    for label in table.decode_lever_labels(arch, batch, context) {
        let cell = table.decode(arch, batch, context, &label)?;
        match cell.lever {
            ControlLever::LockMhz { mhz } => pairs.push((mhz, cell.actual_clock_mhz)),
            ControlLever::FreeRun => free_run_clock_mhz = Some(cell.actual_clock_mhz),
            ControlLever::CapW { .. } => {}
        }
    }
    if pairs.is_empty() {
        return Err(AnalysisError::InsufficientData(format!(
            "no lock cells for {arch}"
        )));
    }
    pairs.sort_unstable();
    let ceiling_mhz = pairs.iter().map(|&(_, actual)| actual).max().unwrap_or(0);
    let clamped_requests = pairs
        .iter()
        .filter(|&&(req, actual)| req != actual)
        .map(|&(req, _)| req)
        .collect();
    Ok(ClampReport {
        arch: arch.to_string(),
        ceiling_mhz,
        pairs,
        clamped_requests,
        free_run_clock_mhz,
    })
}

/// Throughput and power deltas between two honoured locks of one decode
/// cell. When the cell is memory-bound both locks deliver the same
/// throughput and the power delta is pure waste ("wasted boost band").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockPairDelta<R> {
    pub high_mhz: u32,
    pub low_mhz: u32,
    /// |thr(high) - thr(low)| / thr(high).
    pub rel_throughput_delta: R,
    /// (P(high) - P(low)) / P(low).
    pub rel_power_excess: R,
}

pub fn lock_pair_delta<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
    high_mhz: u32,
    low_mhz: u32,
) -> Result<LockPairDelta<R>, AnalysisError> {
    let high = table.decode(arch, batch, context, &lock_label(high_mhz))?;
    let low = table.decode(arch, batch, context, &lock_label(low_mhz))?;
    let thr_delta = (high.median_throughput_tokens_per_s - low.median_throughput_tokens_per_s)
        .abs()
        / high.median_throughput_tokens_per_s;
    let power_excess = (high.median_power_w - low.median_power_w) / low.median_power_w;
    Ok(LockPairDelta {
        high_mhz,
        low_mhz,
        rel_throughput_delta: thr_delta,
        rel_power_excess: power_excess,
    })
}
