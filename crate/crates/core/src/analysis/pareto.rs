//! Throughput/energy Pareto structure of one sweep cell row.
//!
//! Each lever setting for an (architecture, batch, context) decode cell
//! yields one point: throughput (maximize) against energy per token
//! (minimize). The front identifies lever settings that are not strictly
//! beaten on both axes; dominance verdicts compare two specific settings
//! with a relative noise margin.

use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::{AnalysisError, SweepTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint<R> {
    pub label: String,
    pub throughput_tokens_per_s: R,
    pub energy_per_token_j: R,
}

/// True when `a` strictly dominates `b`: at least as good on both axes and
/// strictly better on one.
fn strictly_dominates<R: Real>(a: &ParetoPoint<R>, b: &ParetoPoint<R>) -> bool {
    a.throughput_tokens_per_s >= b.throughput_tokens_per_s
        && a.energy_per_token_j <= b.energy_per_token_j
        && (a.throughput_tokens_per_s > b.throughput_tokens_per_s
            || a.energy_per_token_j < b.energy_per_token_j)
}

/// Indices of the Pareto-optimal points, in input order.
pub fn pareto_front_indices<R: Real>(points: &[ParetoPoint<R>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && strictly_dominates(p, &points[i]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceVerdict {
    /// `a` is meaningfully better on at least one axis and not meaningfully
    /// worse on the other.
    Dominates,
    DominatedBy,
    /// Both axes agree within the margin.
    Equivalent,
    /// Each point wins one axis beyond the margin.
    Tradeoff,
}

/// Compares two lever settings with a relative margin (e.g. 0.01 treats
/// differences under 1% as measurement noise).
pub fn dominance_verdict<R: Real>(
    a: &ParetoPoint<R>,
    b: &ParetoPoint<R>,
    rel_margin: R,
) -> DominanceVerdict {
    let hi = R::one() + rel_margin;
    let lo = R::one() - rel_margin;
    let thr_better = a.throughput_tokens_per_s > b.throughput_tokens_per_s * hi;
    let thr_worse = a.throughput_tokens_per_s < b.throughput_tokens_per_s * lo;
    let e_better = a.energy_per_token_j < b.energy_per_token_j * lo;
    let e_worse = a.energy_per_token_j > b.energy_per_token_j * hi;
    match (thr_better, thr_worse, e_better, e_worse) {
        (false, false, false, false) => DominanceVerdict::Equivalent,
        (_, false, _, false) if thr_better || e_better => DominanceVerdict::Dominates,
        (false, _, false, _) if thr_worse || e_worse => DominanceVerdict::DominatedBy,
        _ => DominanceVerdict::Tradeoff,
    }
}

/// True when every pair of points is equivalent within the margin: the
/// levers are indistinguishable and the "front" is a degenerate blob (the
/// signature of inert levers).
pub fn is_degenerate_blob<R: Real>(points: &[ParetoPoint<R>], rel_margin: R) -> bool {
    if points.len() < 2 {
        return true;
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if dominance_verdict(&points[i], &points[j], rel_margin) != DominanceVerdict::Equivalent
            {
                return false;
            }
        }
    }
    true
}

/// Extracts the Pareto points of one decode cell row (all levers).
pub fn cell_pareto_points<R: Real>(
    table: &SweepTable<R>,
    arch: &str,
    batch: u32,
    context: u32,
) -> Result<Vec<ParetoPoint<R>>, AnalysisError> {
    let labels = table.decode_lever_labels(arch, batch, context);
    if labels.is_empty() {
        return Err(AnalysisError::InsufficientData(format!(
            "no decode cells for {arch} batch={batch} context={context}"
        )));
    }
    labels
        .iter()
        .map(|label| {
            table
                .decode(arch, batch, context, label)
                .map(|c| ParetoPoint {
                    label: label.clone(),
                    throughput_tokens_per_s: c.median_throughput_tokens_per_s,
                    energy_per_token_j: c.median_energy_per_token_j,
                })
        })
        .collect()
}
