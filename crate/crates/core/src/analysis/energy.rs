//! Request-level energy assembly from per-phase measurements.
//!
//! A served request ingests its prompt once (prefill) and then generates
//! output tokens (decode). Per-sequence request energy is therefore
//!
//! `E(n) = E_prefill_per_sequence + n * e_decode_per_token`
//!
//! with the two phases measured under their own clock policies — prefill is
//! compute-bound and runs at the base clock, decode runs at whatever the
//! policy selects.

use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::{AnalysisError, SweepTable};

/// Median decode energy per generated token for one cell and lever.
pub fn decode_energy_per_token_j<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
    lever_label: &str,
) -> Result<R, AnalysisError> {
    Ok(table
        .decode(arch, batch, context, lever_label)?
        .median_energy_per_token_j)
}

/// Median prefill energy for one whole sequence (the batch-level measurement
/// divided by batch size).
pub fn prefill_energy_per_sequence_j<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
    lever_label: &str,
) -> Result<R, AnalysisError> {
    let cell = table.prefill(arch, batch, context, lever_label)?;
    Ok(cell.median_energy_j / R::of(cell.phase.batch() as f64))
}

/// One request's phase-split energy at a given output length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestEnergy<R> {
    pub prefill_j: R,
    pub decode_j: R,
    pub total_j: R,
    /// Total over (context + output) tokens handled.
    pub per_token_j: R,
}

/// Assembles per-sequence request energy for `output_tokens` generated
/// tokens, with prefill and decode measured under separate levers.
pub fn request_energy<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
    output_tokens: u32,
    prefill_lever_label: &str,
    decode_lever_label: &str,
) -> Result<RequestEnergy<R>, AnalysisError> {
    let prefill_j =
        prefill_energy_per_sequence_j(table, arch, batch, context, prefill_lever_label)?;
    let per_token = decode_energy_per_token_j(table, arch, batch, context, decode_lever_label)?;
    let decode_j = per_token * R::of(output_tokens as f64);
    let total_j = prefill_j + decode_j;
    Ok(RequestEnergy {
        prefill_j,
        decode_j,
        total_j,
        per_token_j: total_j / R::of((context as u64 + output_tokens as u64) as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::test_support::mini_table;
    use crate::orchestrator::PhaseKind;

    #[test]
    fn request_energy_combines_phases_linearly() {
        let table = mini_table(
            &["gqa"],
            &[32],
            &[16384],
            &[PhaseKind::Decode, PhaseKind::Prefill],
        );
        let short = request_energy(&table, "gqa", 32, 16384, 64, "lock_1830", "lock_1830").unwrap();
        let long =
            request_energy(&table, "gqa", 32, 16384, 1064, "lock_1830", "lock_1830").unwrap();
        assert!((short.total_j - (short.prefill_j + short.decode_j)).abs() < 1e-12);
        // Same prefill component, decode grows linearly with output length.
        assert_eq!(short.prefill_j, long.prefill_j);
        let per_token = decode_energy_per_token_j(&table, "gqa", 32, 16384, "lock_1830").unwrap();
        assert!((long.decode_j - short.decode_j - 1000.0 * per_token).abs() < 1e-9);
        // Prefill of a 16K prompt dwarfs a 64-token decode tail.
        assert!(short.prefill_j > short.decode_j);
    }

    #[test]
    fn decode_lever_changes_only_the_decode_leg() {
        let table = mini_table(
            &["gqa"],
            &[32],
            &[16384],
            &[PhaseKind::Decode, PhaseKind::Prefill],
        );
        let base = request_energy(&table, "gqa", 32, 16384, 512, "lock_1830", "lock_1830").unwrap();
        let tuned =
            request_energy(&table, "gqa", 32, 16384, 512, "lock_1830", "lock_1185").unwrap();
        assert_eq!(base.prefill_j, tuned.prefill_j);
        assert!(tuned.decode_j < base.decode_j);
        assert!(tuned.total_j < base.total_j);
    }
}
