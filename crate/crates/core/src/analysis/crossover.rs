//! Crossover search: where one architecture stops being cheaper than
//! another.
//!
//! Two comparisons matter operationally. Along the *context* axis, decode
//! energy per token of cache-growing architectures overtakes that of
//! constant-state architectures at some context length. Along the *output
//! length* axis, total request energy crosses where one architecture's
//! cheaper prefill amortizes against the other's cheaper decode.

use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::energy::{decode_energy_per_token_j, prefill_energy_per_sequence_j};
use super::{AnalysisError, SweepTable};

/// First zero of a sampled difference curve, located by linear
/// interpolation between the bracketing samples. Returns `None` when the
/// difference never changes sign over the sampled axis.
pub fn find_sign_flip<R: Real>(axis: &[R], deltas: &[R]) -> Option<R> {
    assert_eq!(axis.len(), deltas.len(), "axis/delta length mismatch");
    for i in 0..axis.len().saturating_sub(1) {
        if deltas[i] == R::zero() {
            return Some(axis[i]);
        }
        if deltas[i] * deltas[i + 1] < R::zero() {
            let span = axis[i + 1] - axis[i];
            return Some(axis[i] + span * deltas[i] / (deltas[i] - deltas[i + 1]));
        }
    }
    // A final exact zero also counts as a crossover.
    match deltas.last() {
        Some(&d) if d == R::zero() => axis.last().copied(),
        _ => None,
    }
}

/// Context length at which `arch_a`'s decode energy per token overtakes
/// `arch_b`'s, at fixed batch and lever. `None` when one architecture stays
/// cheaper over the whole measured context range.
pub fn context_energy_crossover<R: Real>(
    table: &SweepTable<R>,
    arch_a: &str,
    arch_b: &str,
    batch: u32,
    lever_label: &str,
) -> Result<Option<R>, AnalysisError> {
    let contexts = table.contexts();
    if contexts.len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "context crossover needs at least two context lengths".into(),
        ));
    }
    let mut axis = Vec::with_capacity(contexts.len());
    let mut deltas = Vec::with_capacity(contexts.len());
    for &context in &contexts {
        let a = decode_energy_per_token_j(table, arch_a, batch, context, lever_label)?;
        let b = decode_energy_per_token_j(table, arch_b, batch, context, lever_label)?;
        axis.push(R::of(context as f64));
        deltas.push(a - b);
    }
    Ok(find_sign_flip(&axis, &deltas))
}

/// Output length at which two architectures' total request energies cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestCrossover<R> {
    pub arch_a: String,
    pub arch_b: String,
    pub batch: u32,
    pub context: u32,
    pub decode_lever_a: String,
    pub decode_lever_b: String,
    /// Output tokens at equality; `None` when the lines never cross for
    /// positive output length.
    pub output_tokens: Option<R>,
    pub prefill_gap_j: R,
    pub decode_gap_per_token_j: R,
}

/// Solves `E_a(n) = E_b(n)` for output length `n`, where each side is
/// per-sequence prefill energy plus `n` times decode energy per token.
/// Prefill runs at `prefill_lever_label` for both; decode levers may differ
/// (each architecture under its own policy clock).
#[allow(clippy::too_many_arguments)]
pub fn request_energy_crossover<R: Real>(
    table: &SweepTable<R>,
    arch_a: &str,
    arch_b: &str,
    batch: u32,
    context: u32,
    prefill_lever_label: &str,
    decode_lever_a: &str,
    decode_lever_b: &str,
) -> Result<RequestCrossover<R>, AnalysisError> {
    let pre_a = prefill_energy_per_sequence_j(table, arch_a, batch, context, prefill_lever_label)?;
    let pre_b = prefill_energy_per_sequence_j(table, arch_b, batch, context, prefill_lever_label)?;
    let dec_a = decode_energy_per_token_j(table, arch_a, batch, context, decode_lever_a)?;
    let dec_b = decode_energy_per_token_j(table, arch_b, batch, context, decode_lever_b)?;
    // E_a(n) = pre_a + n*dec_a crosses E_b(n) at n = (pre_b - pre_a)/(dec_a - dec_b).
    let num = pre_b - pre_a;
    let den = dec_a - dec_b;
    let output_tokens = if den == R::zero() {
        None
    } else {
        let n = num / den;
        (n > R::zero()).then_some(n)
    };
    Ok(RequestCrossover {
        arch_a: arch_a.to_string(),
        arch_b: arch_b.to_string(),
        batch,
        context,
        decode_lever_a: decode_lever_a.to_string(),
        decode_lever_b: decode_lever_b.to_string(),
        output_tokens,
        prefill_gap_j: num,
        decode_gap_per_token_j: den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::test_support::mini_table;
    use crate::orchestrator::PhaseKind;

    #[test]
    fn sign_flip_interpolates_linearly() {
        let axis = [1.0f64, 2.0, 3.0, 4.0];
        // Crosses between 2 and 3, one quarter of the way.
        let deltas = [-2.0f64, -1.0, 3.0, 5.0];
        let x = find_sign_flip(&axis, &deltas).unwrap();
        assert!((x - 2.25).abs() < 1e-12);
        // Exact zero lands on the sample.
        assert_eq!(find_sign_flip(&axis, &[-1.0, 0.0, 2.0, 3.0]), Some(2.0));
        // Monotone same-sign curve has no crossover.
        assert_eq!(find_sign_flip(&axis, &[1.0, 2.0, 3.0, 4.0]), None);
        // Trailing zero counts.
        assert_eq!(find_sign_flip(&axis, &[1.0, 2.0, 3.0, 0.0]), Some(4.0));
    }

    #[test]
    fn context_crossover_between_cache_growth_and_constant_state() {
        let table = mini_table(
            &["mla", "gqa_ctrl"],
            &[1, 32],
            &[1024, 4096, 16384, 65536],
            &[PhaseKind::Decode],
        );
        // At batch 32 the compressed-cache arch starts cheaper but its
        // per-token math loses to the control's slow cache growth; they
        // cross within the measured range.
        let x32 = context_energy_crossover(&table, "mla", "gqa_ctrl", 32, "lock_1830")
            .unwrap()
            .expect("crossover expected at batch 32");
        assert!(
            (2000.0..=8000.0).contains(&x32),
            "crossover at {x32} tokens"
        );
        // At batch 1 the ordering never flips over the measured range.
        let x1 = context_energy_crossover(&table, "mla", "gqa_ctrl", 1, "lock_1830").unwrap();
        assert_eq!(x1, None);
    }

    #[test]
    fn request_crossover_amortizes_prefill_against_decode() {
        let table = mini_table(
            &["gqa", "mamba2"],
            &[32],
            &[16384],
            &[PhaseKind::Decode, PhaseKind::Prefill],
        );
        // The SSM pays more for prefill but decodes cheaper at long context;
        // both archs run at their minimum-energy clock (1185) for this cell.
        let x = request_energy_crossover(
            &table,
            "mamba2",
            "gqa",
            32,
            16384,
            "lock_1830",
            "lock_1185",
            "lock_1185",
        )
        .unwrap();
        let n = x.output_tokens.expect("request crossover expected");
        assert!((500.0..=2000.0).contains(&n), "crossover at {n} tokens");
        assert!(x.prefill_gap_j < 0.0, "SSM prefill costs more per sequence");
        assert!(
            x.decode_gap_per_token_j < 0.0,
            "SSM decode is cheaper per token"
        );
    }

    #[test]
    fn parallel_lines_do_not_cross() {
        let table = mini_table(
            &["gqa"],
            &[32],
            &[16384],
            &[PhaseKind::Decode, PhaseKind::Prefill],
        );
        let x = request_energy_crossover(
            &table,
            "gqa",
            "gqa",
            32,
            16384,
            "lock_1830",
            "lock_1830",
            "lock_1830",
        )
        .unwrap();
        assert_eq!(x.output_tokens, None);
    }
}
