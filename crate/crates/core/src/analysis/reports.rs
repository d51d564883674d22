//! Report emission: flat CSV files plus a JSON manifest.
//!
//! Seven reports cover the analysis surface: aggregated cells, the optimal
//! clock map, DVFS classes, cap inertness, clock clamping, per-cell Pareto
//! structure, and crossovers. The manifest records tool and schema versions,
//! the sweep seed, data-quality flag counts, and the emitted files, so a
//! report directory is self-describing and reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::{RECORD_SCHEMA_VERSION, TOOL_VERSION};

use super::clocks::{classify_dvfs, optimal_clock_map, ClockMapEntry};
use super::crossover::{context_energy_crossover, request_energy_crossover};
use super::levers::{detect_cap_inertness, detect_clock_clamp};
use super::pareto::{
    cell_pareto_points, dominance_verdict, is_degenerate_blob, pareto_front_indices,
};
use super::{lock_label, AnalysisError, SweepTable};

/// Relative margin used for dominance verdicts and blob detection.
pub const DOMINANCE_MARGIN: f64 = 0.01;

#[derive(Debug, Serialize)]
struct CellRow<R> {
    arch: String,
    phase: &'static str,
    batch: u32,
    context: u32,
    lever: String,
    actual_clock_mhz: u32,
    cap_limited: bool,
    reps: usize,
    median_energy_j: R,
    median_power_w: R,
    median_wall_s: R,
    median_throughput_tokens_per_s: R,
    median_energy_per_token_j: R,
    energy_rel_spread: R,
    noise_flagged: bool,
    gap_flagged_reps: usize,
    counter_disagree_reps: usize,
    throttle_artefact_reps: usize,
}

#[derive(Debug, Serialize)]
struct DvfsRow {
    arch: String,
    class: String,
    context: u32,
    batch: u32,
    budget_clock_mhz: u32,
}

#[derive(Debug, Serialize)]
struct CapRow<R> {
    arch: String,
    cap_w: R,
    cells: usize,
    inert_cells: usize,
    binding_cells: usize,
    artefact_cells: usize,
    all_inert: bool,
    max_base_power_w: R,
}

#[derive(Debug, Serialize)]
struct ClampRow {
    arch: String,
    requested_mhz: u32,
    actual_mhz: u32,
    clamped: bool,
    ceiling_mhz: u32,
    free_run_clock_mhz: Option<u32>,
}

#[derive(Debug, Serialize)]
struct ParetoRow<R> {
    arch: String,
    batch: u32,
    context: u32,
    lever: String,
    throughput_tokens_per_s: R,
    energy_per_token_j: R,
    on_front: bool,
    verdict_vs_base: String,
    degenerate_blob: bool,
}

#[derive(Debug, Serialize)]
struct ContextCrossoverRow<R> {
    arch_a: String,
    arch_b: String,
    batch: u32,
    lever: String,
    crossover_context_tokens: Option<R>,
}

#[derive(Debug, Serialize)]
struct RequestCrossoverRow<R> {
    arch_a: String,
    arch_b: String,
    batch: u32,
    context: u32,
    prefill_lever: String,
    decode_lever_a: String,
    decode_lever_b: String,
    crossover_output_tokens: Option<R>,
    prefill_gap_j: R,
    decode_gap_per_token_j: R,
}

/// One emitted report file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub name: String,
    pub rows: usize,
}

/// Self-description of a report directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportManifest {
    pub tool_version: String,
    pub record_schema_version: u32,
    pub sweep_seed: Option<u64>,
    pub config_digest: Option<String>,
    pub cells: usize,
    pub noise_flagged_cells: usize,
    pub gap_flagged_cells: usize,
    pub counter_disagree_cells: usize,
    pub throttle_artefact_cells: usize,
    pub files: Vec<ReportFile>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<usize, AnalysisError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(rows.len())
}

fn cells_rows<R: Real>(table: &SweepTable<R>) -> Vec<CellRow<R>> {
    table
        .cells()
        .iter()
        .map(|c| CellRow {
            arch: c.arch.clone(),
            phase: c.phase.phase_name(),
            batch: c.phase.batch(),
            context: c.phase.context(),
            lever: c.lever_label.clone(),
            actual_clock_mhz: c.actual_clock_mhz,
            cap_limited: c.cap_limited,
            reps: c.reps,
            median_energy_j: c.median_energy_j,
            median_power_w: c.median_power_w,
            median_wall_s: c.median_wall_s,
            median_throughput_tokens_per_s: c.median_throughput_tokens_per_s,
            median_energy_per_token_j: c.median_energy_per_token_j,
            energy_rel_spread: c.energy_rel_spread,
            noise_flagged: c.noise_flagged,
            gap_flagged_reps: c.gap_flagged_reps,
            counter_disagree_reps: c.counter_disagree_reps,
            throttle_artefact_reps: c.throttle_artefact_reps,
        })
        .collect()
}

fn pareto_rows<R: Real>(table: &SweepTable<R>) -> Result<Vec<ParetoRow<R>>, AnalysisError> {
    let reference = table.reference_clock()?;
    let base_label = lock_label(reference);
    let margin = R::of(DOMINANCE_MARGIN);
    let mut rows = Vec::new();
    for arch in table.arches() {
        for batch in table.batches() {
            for context in table.contexts() {
                let points = match cell_pareto_points(table, &arch, batch, context) {
                    Ok(p) => p,
                    Err(AnalysisError::InsufficientData(_)) => continue,
                    Err(e) => return Err(e),
                };
                let front = pareto_front_indices(&points);
                let blob = is_degenerate_blob(&points, margin);
                let base = points
                    .iter()
                    .find(|p| p.label == base_label)
                    .cloned()
                    .ok_or_else(|| AnalysisError::MissingCell {
                        arch: arch.clone(),
                        phase: "decode".into(),
                        batch,
                        context,
                        lever: base_label.clone(),
                    })?;
                for (i, p) in points.iter().enumerate() {
                    let verdict = dominance_verdict(p, &base, margin);
                    rows.push(ParetoRow {
                        arch: arch.clone(),
                        batch,
                        context,
                        lever: p.label.clone(),
                        throughput_tokens_per_s: p.throughput_tokens_per_s,
                        energy_per_token_j: p.energy_per_token_j,
                        on_front: front.contains(&i),
                        verdict_vs_base: format!("{verdict:?}").to_lowercase(),
                        degenerate_blob: blob,
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn context_crossover_rows<R: Real>(
    table: &SweepTable<R>,
) -> Result<Vec<ContextCrossoverRow<R>>, AnalysisError> {
    let reference = table.reference_clock()?;
    let label = lock_label(reference);
    let arches = table.arches();
    let mut rows = Vec::new();
    if table.contexts().len() < 2 {
        return Ok(rows);
    }
    for (i, a) in arches.iter().enumerate() {
        for b in arches.iter().skip(i + 1) {
            for batch in table.batches() {
                match context_energy_crossover(table, a, b, batch, &label) {
                    Ok(x) => rows.push(ContextCrossoverRow {
                        arch_a: a.clone(),
                        arch_b: b.clone(),
                        batch,
                        lever: label.clone(),
                        crossover_context_tokens: x,
                    }),
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(rows)
}

fn request_crossover_rows<R: Real>(
    table: &SweepTable<R>,
    budget: R,
) -> Result<Vec<RequestCrossoverRow<R>>, AnalysisError> {
    let reference = table.reference_clock()?;
    let prefill_label = lock_label(reference);
    let arches = table.arches();
    let Some(&batch) = table.batches().last() else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for (i, a) in arches.iter().enumerate() {
        for b in arches.iter().skip(i + 1) {
            for context in table.contexts() {
                // Each architecture decodes at its own budget clock.
                let clock_a = match super::clocks::budget_clock(table, a, batch, context, budget) {
                    Ok(c) => c,
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let clock_b = match super::clocks::budget_clock(table, b, batch, context, budget) {
                    Ok(c) => c,
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e),
                };
                match request_energy_crossover(
                    table,
                    a,
                    b,
                    batch,
                    context,
                    &prefill_label,
                    &lock_label(clock_a),
                    &lock_label(clock_b),
                ) {
                    Ok(x) => rows.push(RequestCrossoverRow {
                        arch_a: a.clone(),
                        arch_b: b.clone(),
                        batch,
                        context,
                        prefill_lever: prefill_label.clone(),
                        decode_lever_a: lock_label(clock_a),
                        decode_lever_b: lock_label(clock_b),
                        crossover_output_tokens: x.output_tokens,
                        prefill_gap_j: x.prefill_gap_j,
                        decode_gap_per_token_j: x.decode_gap_per_token_j,
                    }),
                    Err(AnalysisError::MissingCell { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(rows)
}

/// Writes all reports into `out_dir` and returns the manifest (also written
/// as `manifest.json`).
pub fn write_all_reports<R: Real>(
    table: &SweepTable<R>,
    out_dir: &Path,
    budget: R,
    sweep_seed: Option<u64>,
    config_digest: Option<String>,
) -> Result<ReportManifest, AnalysisError> {
    fs::create_dir_all(out_dir)?;
    let path = |name: &str| -> PathBuf { out_dir.join(name) };
    let mut files = Vec::new();

    let rows = write_csv(&path("cells.csv"), &cells_rows(table))?;
    files.push(ReportFile {
        name: "cells.csv".into(),
        rows,
    });

    let clock_map: Vec<ClockMapEntry<R>> = optimal_clock_map(table, budget)?;
    let rows = write_csv(&path("clock_map.csv"), &clock_map)?;
    files.push(ReportFile {
        name: "clock_map.csv".into(),
        rows,
    });

    let mut dvfs_rows = Vec::new();
    for arch in table.arches() {
        match classify_dvfs(table, &arch, budget) {
            Ok(c) => {
                for (batch, clock) in &c.budget_clocks {
                    dvfs_rows.push(DvfsRow {
                        arch: arch.clone(),
                        class: format!("{:?}", c.class).to_lowercase(),
                        context: c.context,
                        batch: *batch,
                        budget_clock_mhz: *clock,
                    });
                }
            }
            Err(AnalysisError::InsufficientData(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let rows = write_csv(&path("dvfs_classes.csv"), &dvfs_rows)?;
    files.push(ReportFile {
        name: "dvfs_classes.csv".into(),
        rows,
    });

    let cap_rows: Vec<CapRow<R>> = detect_cap_inertness(table)?
        .into_iter()
        .map(|r| CapRow {
            arch: r.arch,
            cap_w: r.cap_w,
            cells: r.cells,
            inert_cells: r.inert_cells,
            binding_cells: r.binding_cells,
            artefact_cells: r.artefact_cells,
            all_inert: r.all_inert,
            max_base_power_w: r.max_base_power_w,
        })
        .collect();
    let rows = write_csv(&path("cap_inertness.csv"), &cap_rows)?;
    files.push(ReportFile {
        name: "cap_inertness.csv".into(),
        rows,
    });

    let mut clamp_rows = Vec::new();
    for arch in table.arches() {
        match detect_clock_clamp(table, &arch) {
            Ok(r) => {
                for (requested, actual) in &r.pairs {
                    clamp_rows.push(ClampRow {
                        arch: arch.clone(),
                        requested_mhz: *requested,
                        actual_mhz: *actual,
                        clamped: requested != actual,
                        ceiling_mhz: r.ceiling_mhz,
                        free_run_clock_mhz: r.free_run_clock_mhz,
                    });
                }
            }
            Err(AnalysisError::InsufficientData(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let rows = write_csv(&path("clamp.csv"), &clamp_rows)?;
    files.push(ReportFile {
        name: "clamp.csv".into(),
        rows,
    });

    let rows = write_csv(&path("pareto.csv"), &pareto_rows(table)?)?;
    files.push(ReportFile {
        name: "pareto.csv".into(),
        rows,
    });

    let mut crossover_rows_count = 0;
    crossover_rows_count += write_csv(
        &path("context_crossovers.csv"),
        &context_crossover_rows(table)?,
    )?;
    files.push(ReportFile {
        name: "context_crossovers.csv".into(),
        rows: crossover_rows_count,
    });
    let rows = write_csv(
        &path("request_crossovers.csv"),
        &request_crossover_rows(table, budget)?,
    )?;
    files.push(ReportFile {
        name: "request_crossovers.csv".into(),
        rows,
    });

    let manifest = ReportManifest {
        tool_version: TOOL_VERSION.to_string(),
        record_schema_version: RECORD_SCHEMA_VERSION,
        sweep_seed,
        config_digest,
        cells: table.cells().len(),
        noise_flagged_cells: table.cells().iter().filter(|c| c.noise_flagged).count(),
        gap_flagged_cells: table
            .cells()
            .iter()
            .filter(|c| c.gap_flagged_reps > 0)
            .count(),
        counter_disagree_cells: table
            .cells()
            .iter()
            .filter(|c| c.counter_disagree_reps > 0)
            .count(),
        throttle_artefact_cells: table
            .cells()
            .iter()
            .filter(|c| c.throttle_artefact_reps > 0)
            .count(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path("manifest.json"), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::test_support::mini_table;
    use crate::orchestrator::PhaseKind;

    #[test]
    fn reports_emit_all_files_with_manifest() {
        let table = mini_table(
            &["gqa", "mla"],
            &[1, 32],
            &[1024, 16384],
            &[PhaseKind::Decode, PhaseKind::Prefill],
        );
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            write_all_reports(&table, dir.path(), 0.01, Some(11), Some("digest".into())).unwrap();

        // 2 arch x 2 phases x 2 batches x 2 contexts x 9 levers.
        assert_eq!(manifest.cells, 2 * 2 * 2 * 2 * 9);
        assert_eq!(manifest.sweep_seed, Some(11));
        assert_eq!(manifest.noise_flagged_cells, 0);
        assert_eq!(manifest.counter_disagree_cells, 0);
        let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "cells.csv",
                "clock_map.csv",
                "dvfs_classes.csv",
                "cap_inertness.csv",
                "clamp.csv",
                "pareto.csv",
                "context_crossovers.csv",
                "request_crossovers.csv"
            ]
        );
        for f in &manifest.files {
            let p = dir.path().join(&f.name);
            assert!(p.exists(), "{} missing", f.name);
            let text = std::fs::read_to_string(&p).unwrap();
            // Header + declared row count.
            let lines = text.lines().count();
            assert_eq!(lines, f.rows + usize::from(f.rows > 0), "{}", f.name);
        }

        // The manifest file itself round-trips.
        let back: ReportManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(back, manifest);

        // Spot-check report content: every cap row is inert, clamp table
        // records the 1980 -> 1830 clamp.
        let caps = std::fs::read_to_string(dir.path().join("cap_inertness.csv")).unwrap();
        assert!(caps.contains("true"));
        let clamp = std::fs::read_to_string(dir.path().join("clamp.csv")).unwrap();
        assert!(clamp.contains("1980,1830,true"));
    }
}
