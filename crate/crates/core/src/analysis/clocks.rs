//! Optimal clock maps and DVFS sensitivity classification.
//!
//! For each decode cell the *budget clock* is the lowest honoured lock whose
//! step time stays within a relative throughput budget of the reference
//! (highest) lock; memory-bound cells satisfy a tight budget far below base
//! because their step time is clock-insensitive past the pacing knee. The
//! *minimum-energy clock* instead minimizes measured energy per token
//! outright (ties break to the lower clock).
//!
//! How the budget clock moves with batch size at the shortest context
//! classifies an architecture's DVFS sensitivity.

use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::{lock_label, AnalysisError, SweepTable};

/// Default relative throughput budget for the budget clock.
pub const DEFAULT_THROUGHPUT_BUDGET: f64 = 0.01;

/// Lowest honoured lock whose median step time is within `(1 + budget)` of
/// the reference lock's.
pub fn budget_clock<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
    budget: R,
) -> Result<u32, AnalysisError> {
    let locks = table.honoured_locks();
    let reference = table.reference_clock()?;
    let base = table.decode(arch, batch, context, &lock_label(reference))?;
    let allowed = base.median_wall_s * (R::one() + budget);
    for mhz in locks {
        let cell = table.decode(arch, batch, context, &lock_label(mhz))?;
        if cell.median_wall_s <= allowed {
            return Ok(mhz);
        }
    }
    Ok(reference)
}

/// Honoured lock with the lowest median energy per token; ties break to the
/// lower clock.
pub fn min_energy_clock<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
) -> Result<(u32, R), AnalysisError> {
    let mut best: Option<(u32, R)> = None;
    for mhz in table.honoured_locks() {
        let cell = table.decode(arch, batch, context, &lock_label(mhz))?;
        let e = cell.median_energy_per_token_j;
        if best.map_or(true, |(_, b)| e < b) {
            best = Some((mhz, e));
        }
    }
    best.ok_or_else(|| AnalysisError::InsufficientData("no honoured locks".into()))
}

/// One decode cell's optimal-clock entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockMapEntry<R> {
    pub arch: String,
    pub batch: u32,
    pub context: u32,
    pub budget_clock_mhz: u32,
    pub min_energy_clock_mhz: u32,
    pub base_energy_per_token_j: R,
    pub budget_energy_per_token_j: R,
    pub min_energy_per_token_j: R,
    /// 1 - e(budget)/e(base).
    pub budget_saving_rel: R,
    /// Relative step-time cost of the budget clock vs base.
    pub budget_slowdown_rel: R,
}

/// Computes budget and minimum-energy clocks for every decode cell.
pub fn optimal_clock_map<R: Real>(
    table: &SweepTable<R>,
    budget: R,
) -> Result<Vec<ClockMapEntry<R>>, AnalysisError> {
    let reference = table.reference_clock()?;
    let mut entries = Vec::new();
    for arch in table.arches() {
        for context in table.contexts() {
            for batch in table.batches() {
                let base = match table.decode(&arch, batch, context, &lock_label(reference)) {
                    Ok(c) => c,
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let b_mhz = budget_clock(table, &arch, batch, context, budget)?;
                let b_cell = table.decode(&arch, batch, context, &lock_label(b_mhz))?;
                let (m_mhz, m_energy) = min_energy_clock(table, &arch, batch, context)?;
                entries.push(ClockMapEntry {
                    arch: arch.clone(),
                    batch,
                    context,
                    budget_clock_mhz: b_mhz,
                    min_energy_clock_mhz: m_mhz,
                    base_energy_per_token_j: base.median_energy_per_token_j,
                    budget_energy_per_token_j: b_cell.median_energy_per_token_j,
                    min_energy_per_token_j: m_energy,
                    budget_saving_rel: R::one()
                        - b_cell.median_energy_per_token_j / base.median_energy_per_token_j,
                    budget_slowdown_rel: b_cell.median_wall_s / base.median_wall_s - R::one(),
                });
            }
        }
    }
    Ok(entries)
}

/// DVFS sensitivity classes over batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DvfsClass {
    /// Budget clock sits at the lowest honoured lock for every batch size.
    ComputeLight,
    /// Budget clock stays within one lock step below base across batches.
    BatchInvariant,
    /// Budget clock rises monotonically by two or more lock steps from the
    /// smallest to the largest batch.
    BatchSensitive,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvfsClassification {
    pub arch: String,
    pub class: DvfsClass,
    /// Context length the classification was read at (shortest measured).
    pub context: u32,
    /// (batch, budget clock) pairs, ascending in batch.
    pub budget_clocks: Vec<(u32, u32)>,
}

/// Classifies one architecture from the budget-clock trajectory over batch
/// size at the shortest measured context (the regime where batch sensitivity
/// is purest, before context traffic swamps it).
pub fn classify_dvfs<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    budget: R,
) -> Result<DvfsClassification, AnalysisError> {
    let locks = table.honoured_locks();
    let reference = table.reference_clock()?;
    let context = *table
        .contexts()
        .first()
        .ok_or_else(|| AnalysisError::InsufficientData("no contexts".into()))?;
    let batches = table.batches();
    if batches.len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "classification needs at least two batch sizes".into(),
        ));
    }
    let mut budget_clocks = Vec::with_capacity(batches.len());
    for &batch in &batches {
        budget_clocks.push((batch, budget_clock(table, arch, batch, context, budget)?));
    }
    let idx: Vec<usize> = budget_clocks
        .iter()
        .map(|&(_, mhz)| {
            locks
                .iter()
                .position(|&c| c == mhz)
                .expect("budget clock is an honoured lock")
        })
        .collect();
    let clocks: Vec<u32> = budget_clocks.iter().map(|&(_, c)| c).collect();

    let class = if clocks.iter().all(|&c| c == locks[0]) {
        DvfsClass::ComputeLight
    } else if idx.iter().max().unwrap() - idx.iter().min().unwrap() <= 1
        && *clocks.iter().max().unwrap() < reference
    {
        DvfsClass::BatchInvariant
    } else if idx.last().unwrap() - idx.first().unwrap() >= 2
        && idx.windows(2).all(|w| w[0] <= w[1])
    {
        DvfsClass::BatchSensitive
    } else {
        DvfsClass::Unclassified
    };
    Ok(DvfsClassification {
        arch: arch.to_string(),
        class,
        context,
        budget_clocks,
    })
}
