//! Execution backends: a calibrated analytical simulator for desk-scale
//! verification and a real-hardware driver shelling out to the vendor
//! telemetry utility.
//!
//! A backend runs exactly one measured phase (a prefill pass or a fixed
//! number of decode steps) under one control lever and returns a
//! self-contained [`RunRecord`]. All randomness comes from the request's
//! `rng_seed`, so any record can be reproduced bit-for-bit.

pub mod real;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{ControlLever, DvfsState};
use crate::num::Real;
use crate::telemetry::{EnergyMeasurement, PowerTrace, TelemetryError};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {reason}. {hint}")]
    Unavailable { reason: String, hint: String },
    #[error("unknown architecture '{0}'")]
    UnknownArch(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("telemetry: {0}")]
    Telemetry(#[from] TelemetryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("external command failed with status {status}: {stderr}")]
    CommandFailed { status: i32, stderr: String },
}

/// Which serving phase a run measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum PhaseSpec {
    /// One full pass over `context` prompt tokens per sequence.
    Prefill { batch: u32, context: u32 },
    /// `output_tokens` decode steps at a fixed cached context length.
    Decode {
        batch: u32,
        context: u32,
        output_tokens: u32,
    },
}

impl PhaseSpec {
    pub fn phase_name(&self) -> &'static str {
        match self {
            PhaseSpec::Prefill { .. } => "prefill",
            PhaseSpec::Decode { .. } => "decode",
        }
    }

    pub fn batch(&self) -> u32 {
        match *self {
            PhaseSpec::Prefill { batch, .. } | PhaseSpec::Decode { batch, .. } => batch,
        }
    }

    pub fn context(&self) -> u32 {
        match *self {
            PhaseSpec::Prefill { context, .. } | PhaseSpec::Decode { context, .. } => context,
        }
    }

    /// Tokens of useful work: prompt tokens ingested or tokens generated.
    pub fn work_tokens(&self) -> u64 {
        match *self {
            PhaseSpec::Prefill { batch, context } => batch as u64 * context as u64,
            PhaseSpec::Decode {
                batch,
                output_tokens,
                ..
            } => batch as u64 * output_tokens as u64,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let (batch, context) = (self.batch(), self.context());
        if batch == 0 || context == 0 {
            return Err(BackendError::InvalidRequest(
                "batch and context must be positive".to_string(),
            ));
        }
        if let PhaseSpec::Decode { output_tokens, .. } = self {
            if *output_tokens == 0 {
                return Err(BackendError::InvalidRequest(
                    "decode needs at least one output token".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// One unit of backend work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRequest<R> {
    /// Architecture profile name to run.
    pub arch: String,
    pub phase: PhaseSpec,
    pub lever: ControlLever<R>,
    /// Stable identifier of the (arch, phase, lever) cell this run belongs to.
    pub config_id: String,
    pub rep_index: u32,
    pub warmup: bool,
    /// Seed for all run-local randomness; derived per (sweep seed, config,
    /// rep) by the orchestrator.
    pub rng_seed: u64,
    /// Keep the raw power trace in the record (heavy; for debugging).
    pub keep_trace: bool,
}

/// Everything measured and derived from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord<R> {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_id: String,
    pub arch: String,
    pub phase: PhaseSpec,
    pub lever: ControlLever<R>,
    /// Stable short label of the lever, for report columns.
    pub lever_label: String,
    pub rep_index: u32,
    pub warmup: bool,
    pub rng_seed: u64,
    pub dvfs: DvfsState<R>,
    pub wall_time_s: R,
    pub work_tokens: u64,
    pub throughput_tokens_per_s: R,
    pub energy: EnergyMeasurement<R>,
    pub avg_power_w: R,
    pub energy_per_token_j: R,
    pub sample_count: usize,
    /// A transient clock-throttle event perturbed this run.
    pub throttle_artefact: bool,
    #[serde(skip_serializing_if = "Option::is_none", default = "Option::default")]
    pub trace: Option<PowerTrace<R>>,
}

/// What a backend can actually control and observe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub name: String,
    pub supports_clock_lock: bool,
    pub supports_power_cap: bool,
    pub supports_energy_counter: bool,
    pub nominal_cadence_s: f64,
}

/// A source of measured runs.
pub trait Backend<R: Real> {
    fn capabilities(&self) -> Capabilities;

    /// Executes one phase under one lever and returns its record.
    fn run(&mut self, request: &WorkloadRequest<R>) -> Result<RunRecord<R>, BackendError>;

    /// Clears device state between sweep cells (locks, caps).
    fn reset(&mut self) -> Result<(), BackendError>;
}
