//! Clock-policy synthesis and lookup.
//!
//! A policy maps (architecture, phase, batch size, context length) to an SM
//! clock lock. Synthesis reads a sweep table: each decode cell contributes
//! its budget clock, cells are merged into context bands of batch rules, and
//! prefill gets a single (typically base) clock because compute-bound work
//! pays full throughput for every MHz removed. Lookups between measured grid
//! points resolve to the next-higher rule, so interpolation errs toward the
//! faster clock; lookups outside the measured grid are flagged.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::clocks::{budget_clock, classify_dvfs, DvfsClass};
use crate::analysis::{lock_label, AnalysisError, SweepTable};
use crate::num::Real;
use crate::TOOL_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("unknown architecture {0:?} (policy covers {1:?})")]
    UnknownArch(String, Vec<String>),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("toml parse: {0}")]
    TomlParse(#[from] toml::de::Error),
    #[error("toml serialize: {0}")]
    TomlSerialize(#[from] toml::ser::Error),
}

/// One batch segment inside a context band. `max_batch = None` means the
/// rule is open-ended above.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRule {
    pub max_batch: Option<u32>,
    pub clock_mhz: u32,
}

/// Batch rules valid up to `max_context` (inclusive); `None` is open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBand {
    pub max_context: Option<u32>,
    pub batch_rules: Vec<BatchRule>,
}

/// Policy for one architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchPolicy {
    pub arch: String,
    pub class: DvfsClass,
    pub prefill_clock_mhz: u32,
    /// Largest batch size that was actually measured.
    pub measured_max_batch: u32,
    /// Largest context length that was actually measured.
    pub measured_max_context: u32,
    pub bands: Vec<ContextBand>,
}

/// Complete synthesized policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable<R> {
    pub tool_version: String,
    /// Relative throughput budget the decode clocks were chosen under.
    pub throughput_budget: R,
    /// Fallback clock for unmatched lookups (the reference lock).
    pub default_clock_mhz: u32,
    pub arches: Vec<ArchPolicy>,
}

/// Result of a policy lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub clock_mhz: u32,
    /// The requested point lies outside the measured grid; the clock is the
    /// nearest rule's and should be treated as a guess.
    pub extrapolated: bool,
}

/// Phase selector for lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyPhase {
    Prefill,
    Decode,
}

impl<R: Real> PolicyTable<R> {
    /// Builds a policy from an aggregated sweep.
    pub fn synthesize(table: &SweepTable<R>, budget: R) -> Result<Self, PolicyError> {
        let reference = table.reference_clock()?;
        let batches = table.batches();
        let contexts = table.contexts();
        if batches.is_empty() || contexts.is_empty() {
            return Err(PolicyError::Invalid("empty sweep table".into()));
        }
        let mut arches = Vec::new();
        for arch in table.arches() {
            let class = match classify_dvfs(table, &arch, budget) {
                Ok(c) => c.class,
                Err(AnalysisError::InsufficientData(_)) => DvfsClass::Unclassified,
                Err(e) => return Err(e.into()),
            };

            // Budget clocks per (context, batch); a batch rule covers every
            // unmeasured batch up to the next measured one, so gaps resolve
            // to the clock of the next-larger measured batch.
            let mut bands: Vec<ContextBand> = Vec::new();
            let mut pending: Option<(u32, Vec<BatchRule>)> = None;
            for &context in &contexts {
                let mut rules: Vec<BatchRule> = Vec::new();
                for &batch in &batches {
                    let mhz = budget_clock(table, &arch, batch, context, budget)?;
                    match rules.last_mut() {
                        Some(last) if last.clock_mhz == mhz => last.max_batch = Some(batch),
                        _ => rules.push(BatchRule {
                            max_batch: Some(batch),
                            clock_mhz: mhz,
                        }),
                    }
                }
                if let Some(last) = rules.last_mut() {
                    last.max_batch = None;
                }
                match &mut pending {
                    Some((last_context, last_rules)) if *last_rules == rules => {
                        *last_context = context;
                    }
                    Some((last_context, last_rules)) => {
                        bands.push(ContextBand {
                            max_context: Some(*last_context),
                            batch_rules: last_rules.clone(),
                        });
                        pending = Some((context, rules));
                    }
                    None => pending = Some((context, rules)),
                }
            }
            let (_, last_rules) = pending.expect("at least one context");
            bands.push(ContextBand {
                max_context: None,
                batch_rules: last_rules,
            });

            let prefill_clock_mhz = prefill_budget_clock(table, &arch, budget)?;
            arches.push(ArchPolicy {
                arch,
                class,
                prefill_clock_mhz,
                measured_max_batch: *batches.last().unwrap(),
                measured_max_context: *contexts.last().unwrap(),
                bands,
            });
        }
        Ok(PolicyTable {
            tool_version: TOOL_VERSION.to_string(),
            throughput_budget: budget,
            default_clock_mhz: reference,
            arches,
        })
    }

    /// Looks up the clock for a workload point.
    pub fn apply(
        &self,
        arch: &str,
        phase: PolicyPhase,
        batch: u32,
        context: u32,
    ) -> Result<PolicyDecision, PolicyError> {
        let policy = self.arches.iter().find(|a| a.arch == arch).ok_or_else(|| {
            PolicyError::UnknownArch(
                arch.to_string(),
                self.arches.iter().map(|a| a.arch.clone()).collect(),
            )
        })?;
        let extrapolated =
            batch > policy.measured_max_batch || context > policy.measured_max_context;
        if phase == PolicyPhase::Prefill {
            return Ok(PolicyDecision {
                clock_mhz: policy.prefill_clock_mhz,
                extrapolated,
            });
        }
        let band = policy
            .bands
            .iter()
            .find(|b| b.max_context.map_or(true, |m| context <= m))
            .ok_or_else(|| PolicyError::Invalid(format!("no context band in {arch}")))?;
        let rule = band
            .batch_rules
            .iter()
            .find(|r| r.max_batch.map_or(true, |m| batch <= m))
            .ok_or_else(|| PolicyError::Invalid(format!("no batch rule in {arch}")))?;
        Ok(PolicyDecision {
            clock_mhz: rule.clock_mhz,
            extrapolated,
        })
    }

    /// Structural sanity: bands and rules are non-empty, thresholds ascend,
    /// and the final band/rule is open-ended.
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.arches.is_empty() {
            return Err(PolicyError::Invalid("no architectures".into()));
        }
        for a in &self.arches {
            if a.bands.is_empty() {
                return Err(PolicyError::Invalid(format!("{}: no bands", a.arch)));
            }
            if a.bands.last().unwrap().max_context.is_some() {
                return Err(PolicyError::Invalid(format!(
                    "{}: final band must be open-ended",
                    a.arch
                )));
            }
            let mut prev_context = 0u32;
            for band in &a.bands {
                if let Some(m) = band.max_context {
                    if m <= prev_context {
                        return Err(PolicyError::Invalid(format!(
                            "{}: context thresholds must ascend",
                            a.arch
                        )));
                    }
                    prev_context = m;
                }
                if band.batch_rules.is_empty() {
                    return Err(PolicyError::Invalid(format!(
                        "{}: empty batch rules",
                        a.arch
                    )));
                }
                if band.batch_rules.last().unwrap().max_batch.is_some() {
                    return Err(PolicyError::Invalid(format!(
                        "{}: final batch rule must be open-ended",
                        a.arch
                    )));
                }
                let mut prev_batch = 0u32;
                for rule in &band.batch_rules {
                    if rule.clock_mhz == 0 {
                        return Err(PolicyError::Invalid(format!("{}: zero clock", a.arch)));
                    }
                    if let Some(m) = rule.max_batch {
                        if m <= prev_batch {
                            return Err(PolicyError::Invalid(format!(
                                "{}: batch thresholds must ascend",
                                a.arch
                            )));
                        }
                        prev_batch = m;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save_toml(&self, path: &Path) -> Result<(), PolicyError> {
        let text = toml::to_string_pretty(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load_toml(path: &Path) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path)?;
        let table: Self = toml::from_str(&text)?;
        table.validate()?;
        Ok(table)
    }
}

/// Lowest honoured lock keeping every measured prefill cell within the wall
/// budget; compute-bound prefill typically admits nothing below base.
fn prefill_budget_clock<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    budget: R,
) -> Result<u32, PolicyError> {
    let locks = table.honoured_locks();
    let reference = table.reference_clock()?;
    let mut best = locks.first().copied().unwrap_or(reference);
    let mut saw_any = false;
    for batch in table.batches() {
        for context in table.contexts() {
            let base = match table.prefill(arch, batch, context, &lock_label(reference)) {
                Ok(c) => c,
                Err(AnalysisError::MissingCell { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            saw_any = true;
            let allowed = base.median_wall_s * (R::one() + budget);
            let mut cell_best = reference;
            for &mhz in &locks {
                match table.prefill(arch, batch, context, &lock_label(mhz)) {
                    Ok(cell) if cell.median_wall_s <= allowed => {
                        cell_best = mhz;
                        break;
                    }
                    Ok(_) => continue,
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            best = best.max(cell_best);
        }
    }
    Ok(if saw_any { best } else { reference })
}
