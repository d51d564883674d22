//! Sweep orchestration: grid planning, deterministic seeding, durable run
//! records, resume, and per-cell aggregation.
//!
//! A sweep cell is one (architecture, phase, batch, context, lever)
//! combination; each cell runs a few discarded warmup repetitions followed by
//! the measured repetitions. Every repetition derives its own RNG seed from
//! the sweep seed, the cell's config id, and the repetition index, so runs
//! are reproducible in isolation and a resumed sweep produces records
//! identical to an uninterrupted one.
//!
//! Records append to a JSONL sink, flushed per line. On resume the sink is
//! scanned and already-present (config, repetition) pairs are skipped; a
//! truncated final line (a crash mid-write) is tolerated and re-run.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{Backend, BackendError, PhaseSpec, RunRecord, WorkloadRequest};
use crate::device::ControlLever;
use crate::num::Real;
use crate::stats::{median, stddev};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("record sink io: {0}")]
    Io(#[from] std::io::Error),
    #[error("record file corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("sweep grid invalid: {0}")]
    InvalidGrid(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

/// Which phases a sweep measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Decode,
    Prefill,
}

/// The full sweep specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid<R> {
    pub arches: Vec<String>,
    pub batch_sizes: Vec<u32>,
    pub context_lengths: Vec<u32>,
    pub lock_clocks_mhz: Vec<u32>,
    pub power_caps_w: Vec<R>,
    pub include_free_run: bool,
    pub phases: Vec<PhaseKind>,
    /// Decode steps measured per run.
    pub decode_output_tokens: u32,
    pub warmup_reps: u32,
    pub measure_reps: u32,
    pub seed: u64,
}

impl<R: Real> SweepGrid<R> {
    /// The reference characterization sweep: five architectures, six batch
    /// sizes, four context lengths, every supported lock, the serving-range
    /// power caps, and a free-run lever.
    pub fn reference(seed: u64) -> Self {
        Self {
            arches: ["gqa", "gqa_ctrl", "mla", "gdn", "mamba2"]
                .map(String::from)
                .to_vec(),
            batch_sizes: vec![1, 2, 4, 8, 16, 32],
            context_lengths: vec![1024, 4096, 16384, 65536],
            lock_clocks_mhz: vec![390, 780, 1185, 1590, 1830, 1980],
            power_caps_w: [280.0, 420.0, 500.0, 600.0, 700.0].map(R::of).to_vec(),
            include_free_run: true,
            phases: vec![PhaseKind::Decode, PhaseKind::Prefill],
            decode_output_tokens: 64,
            warmup_reps: 3,
            measure_reps: 10,
            seed,
        }
    }

    pub fn levers(&self) -> Vec<ControlLever<R>> {
        let mut levers: Vec<ControlLever<R>> = self
            .lock_clocks_mhz
            .iter()
            .map(|&mhz| ControlLever::LockMhz { mhz })
            .collect();
        levers.extend(
            self.power_caps_w
                .iter()
                .map(|&watts| ControlLever::CapW { watts }),
        );
        if self.include_free_run {
            levers.push(ControlLever::FreeRun);
        }
        levers
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.arches.is_empty()
            || self.batch_sizes.is_empty()
            || self.context_lengths.is_empty()
            || self.phases.is_empty()
        {
            return Err(OrchestratorError::InvalidGrid(
                "arches, batch sizes, contexts, and phases must be non-empty".into(),
            ));
        }
        if self.levers().is_empty() {
            return Err(OrchestratorError::InvalidGrid("no levers".into()));
        }
        if self.measure_reps == 0 {
            return Err(OrchestratorError::InvalidGrid(
                "at least one measured repetition required".into(),
            ));
        }
        if self.decode_output_tokens == 0 && self.phases.contains(&PhaseKind::Decode) {
            return Err(OrchestratorError::InvalidGrid(
                "decode_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn reps_per_cell(&self) -> u32 {
        self.warmup_reps + self.measure_reps
    }

    pub fn cell_count(&self) -> usize {
        self.arches.len()
            * self.phases.len()
            * self.batch_sizes.len()
            * self.context_lengths.len()
            * self.levers().len()
    }
}

/// Stable identifier of one sweep cell. Sixteen hex chars of a SHA-256 over
/// the cell's canonical description.
pub fn config_id<R: Real>(arch: &str, phase: &PhaseSpec, lever: &ControlLever<R>) -> String {
    let canonical = format!(
        "v1|arch={arch}|phase={}|batch={}|context={}|output={}|lever={}",
        phase.phase_name(),
        phase.batch(),
        phase.context(),
        match phase {
            PhaseSpec::Decode { output_tokens, .. } => *output_tokens,
            PhaseSpec::Prefill { .. } => 0,
        },
        lever.label(),
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-repetition RNG seed derived from the sweep seed, cell id, and
/// repetition index.
pub fn derive_rng_seed(sweep_seed: u64, config_id: &str, rep_index: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(sweep_seed.to_le_bytes());
    hasher.update(config_id.as_bytes());
    hasher.update(rep_index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Expands a grid into its full, deterministic run plan
/// (architecture-major order).
pub fn plan_sweep<R: Real>(
    grid: &SweepGrid<R>,
) -> Result<Vec<WorkloadRequest<R>>, OrchestratorError> {
    grid.validate()?;
    let levers = grid.levers();
    let mut plan = Vec::with_capacity(grid.cell_count() * grid.reps_per_cell() as usize);
    for arch in &grid.arches {
        for phase_kind in &grid.phases {
            for &batch in &grid.batch_sizes {
                for &context in &grid.context_lengths {
                    let phase = match phase_kind {
                        PhaseKind::Decode => PhaseSpec::Decode {
                            batch,
                            context,
                            output_tokens: grid.decode_output_tokens,
                        },
                        PhaseKind::Prefill => PhaseSpec::Prefill { batch, context },
                    };
                    for lever in &levers {
                        let id = config_id(arch, &phase, lever);
                        for rep in 0..grid.reps_per_cell() {
                            plan.push(WorkloadRequest {
                                arch: arch.clone(),
                                phase,
                                lever: *lever,
                                config_id: id.clone(),
                                rep_index: rep,
                                warmup: rep < grid.warmup_reps,
                                rng_seed: derive_rng_seed(grid.seed, &id, rep),
                                keep_trace: false,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(plan)
}

/// Append-only JSONL sink for run records, flushed per record.
pub struct RecordSink {
    writer: BufWriter<File>,
}

impl RecordSink {
    pub fn append_to(path: &Path) -> Result<Self, OrchestratorError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }

    pub fn append<R: Real + Serialize>(
        &mut self,
        record: &RunRecord<R>,
    ) -> Result<(), OrchestratorError> {
        let line = serde_json::to_string(record).map_err(|e| OrchestratorError::Corrupt {
            line: 0,
            message: e.to_string(),
        })?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a record sink, tolerating a truncated final line (crash mid-write).
/// Returns the records plus whether a trailing partial line was dropped.
pub fn read_records<R: Real + DeserializeOwned>(
    path: &Path,
) -> Result<(Vec<RunRecord<R>>, bool), OrchestratorError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let lines: Vec<String> = reader
        .lines()
        .collect::<Result<_, _>>()
        .map_err(OrchestratorError::Io)?;
    let mut records = Vec::with_capacity(lines.len());
    let mut truncated_tail = false;
    let last_non_empty = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord<R>>(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                if Some(i) == last_non_empty {
                    truncated_tail = true;
                } else {
                    return Err(OrchestratorError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    Ok((records, truncated_tail))
}

/// Truncates a partial trailing line (left by a crash mid-append) so new
/// records never merge into it. Returns true when bytes were dropped.
pub fn repair_truncated_tail(path: &Path) -> Result<bool, OrchestratorError> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(false);
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new().write(true).open(path)?;
    file.set_len(keep as u64)?;
    Ok(true)
}

/// One failed repetition; failures never abort the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub config_id: String,
    pub arch: String,
    pub rep_index: u32,
    pub error: String,
}

/// Outcome of a sweep invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub planned: usize,
    pub executed: usize,
    pub skipped_resume: usize,
    pub failures: Vec<RunFailure>,
}

/// Runs (or resumes) a sweep against `backend`, appending to the sink at
/// `records_path`.
pub fn run_sweep<R, B>(
    backend: &mut B,
    grid: &SweepGrid<R>,
    records_path: &Path,
) -> Result<SweepOutcome, OrchestratorError>
where
    R: Real + Serialize + DeserializeOwned,
    B: Backend<R> + ?Sized,
{
    let plan = plan_sweep(grid)?;
    let mut done: std::collections::HashSet<(String, u32)> = std::collections::HashSet::new();
    if records_path.exists() {
        repair_truncated_tail(records_path)?;
        let (existing, _) = read_records::<R>(records_path)?;
        done.extend(existing.into_iter().map(|r| (r.config_id, r.rep_index)));
    }

    let mut sink = RecordSink::append_to(records_path)?;
    let mut outcome = SweepOutcome {
        planned: plan.len(),
        executed: 0,
        skipped_resume: 0,
        failures: Vec::new(),
    };
    let mut current_cell: Option<String> = None;
    for request in &plan {
        if done.contains(&(request.config_id.clone(), request.rep_index)) {
            outcome.skipped_resume += 1;
            continue;
        }
        if current_cell.as_deref() != Some(request.config_id.as_str()) {
            backend.reset()?;
            current_cell = Some(request.config_id.clone());
        }
        match backend.run(request) {
            Ok(record) => {
                sink.append(&record)?;
                outcome.executed += 1;
            }
            Err(err) => outcome.failures.push(RunFailure {
                config_id: request.config_id.clone(),
                arch: request.arch.clone(),
                rep_index: request.rep_index,
                error: err.to_string(),
            }),
        }
    }
    backend.reset()?;
    Ok(outcome)
}

/// Per-cell aggregate over measured (non-warmup) repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary<R> {
    pub config_id: String,
    pub arch: String,
    pub phase: PhaseSpec,
    pub lever: ControlLever<R>,
    pub lever_label: String,
    pub actual_clock_mhz: u32,
    pub cap_limited: bool,
    pub cap_unsatisfiable: bool,
    pub reps: usize,
    pub median_energy_j: R,
    pub median_power_w: R,
    pub median_wall_s: R,
    pub median_throughput_tokens_per_s: R,
    pub median_energy_per_token_j: R,
    /// Energy dispersion: sample standard deviation over median.
    pub energy_rel_spread: R,
    /// Dispersion above the acceptance threshold (3%).
    pub noise_flagged: bool,
    pub gap_flagged_reps: usize,
    pub counter_disagree_reps: usize,
    pub throttle_artefact_reps: usize,
}

/// Relative energy spread above which a cell is flagged as noisy.
pub const NOISE_FLAG_THRESHOLD: f64 = 0.03;

/// Groups measured records by cell and reduces them to medians.
///
/// Warmup repetitions are excluded. Cells are returned in a deterministic
/// order (arch, phase, context, batch, lever label).
pub fn aggregate<R: Real>(records: &[RunRecord<R>]) -> Vec<CellSummary<R>> {
    let mut groups: BTreeMap<(String, &'static str, u32, u32, String), Vec<&RunRecord<R>>> =
        BTreeMap::new();
    for r in records.iter().filter(|r| !r.warmup) {
        groups
            .entry((
                r.arch.clone(),
                r.phase.phase_name(),
                r.phase.context(),
                r.phase.batch(),
                r.lever_label.clone(),
            ))
            .or_default()
            .push(r);
    }
    let mut summaries = Vec::with_capacity(groups.len());
    for ((_, _, _, _, _), cell) in groups {
        let first = cell[0];
        // A transient throttle can corrupt any single rep's DVFS state, so
        // the cell reports the modal clock (ties to the higher clock) and
        // majority cap flags rather than trusting one rep.
        let mut clock_counts: BTreeMap<u32, usize> = BTreeMap::new();
        for r in &cell {
            *clock_counts.entry(r.dvfs.actual_clock_mhz).or_default() += 1;
        }
        let actual_clock_mhz = clock_counts
            .into_iter()
            .max_by_key(|&(clock, count)| (count, clock))
            .map(|(clock, _)| clock)
            .expect("non-empty cell");
        let cap_limited = cell.iter().filter(|r| r.dvfs.cap_limited).count() * 2 > cell.len();
        let cap_unsatisfiable =
            cell.iter().filter(|r| r.dvfs.cap_unsatisfiable).count() * 2 > cell.len();
        let energies: Vec<R> = cell.iter().map(|r| r.energy.energy_j).collect();
        let powers: Vec<R> = cell.iter().map(|r| r.avg_power_w).collect();
        let walls: Vec<R> = cell.iter().map(|r| r.wall_time_s).collect();
        let throughputs: Vec<R> = cell.iter().map(|r| r.throughput_tokens_per_s).collect();
        let per_token: Vec<R> = cell.iter().map(|r| r.energy_per_token_j).collect();
        let median_energy = median(&energies).expect("non-empty cell");
        let spread = stddev(&energies).expect("non-empty cell") / median_energy;
        summaries.push(CellSummary {
            config_id: first.config_id.clone(),
            arch: first.arch.clone(),
            phase: first.phase,
            lever: first.lever,
            lever_label: first.lever_label.clone(),
            actual_clock_mhz,
            cap_limited,
            cap_unsatisfiable,
            reps: cell.len(),
            median_energy_j: median_energy,
            median_power_w: median(&powers).expect("non-empty"),
            median_wall_s: median(&walls).expect("non-empty"),
            median_throughput_tokens_per_s: median(&throughputs).expect("non-empty"),
            median_energy_per_token_j: median(&per_token).expect("non-empty"),
            energy_rel_spread: spread,
            noise_flagged: spread > R::of(NOISE_FLAG_THRESHOLD),
            gap_flagged_reps: cell.iter().filter(|r| r.energy.gap_flagged).count(),
            counter_disagree_reps: cell
                .iter()
                .filter(|r| r.energy.validation == crate::telemetry::CounterValidation::Disagrees)
                .count(),
            throttle_artefact_reps: cell.iter().filter(|r| r.throttle_artefact).count(),
        });
    }
    summaries
}
