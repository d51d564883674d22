//! Analytical simulator backend.
//!
//! The simulator resolves the requested lever exactly as the driver would,
//! computes deterministic wall times from the workload model, then emits a
//! synthetic power trace with sampler jitter and multiplicative Gaussian
//! power noise. Only power readings carry noise; wall time, clocks, and
//! token counts are deterministic, so throughput is exact and every record
//! reproduces bit-for-bit from its `rng_seed`.
//!
//! Timestamps are virtual (each run starts at t = 0), which keeps resumed
//! sweeps identical to uninterrupted ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::device::{resolve_lever, DeviceSpec, PowerModel};
use crate::num::Real;
use crate::telemetry::{
    cross_validate, energy_with_fallback, PhaseWindow, PowerSample, TraceBuilder,
    COUNTER_MIN_DURATION_S, COUNTER_TOLERANCE, DEFAULT_CADENCE_S, FALLBACK_THRESHOLD_S,
};
use crate::workload::{ArchitectureProfile, ProfileSet};
use crate::{RECORD_SCHEMA_VERSION, TOOL_VERSION};

use super::{Backend, BackendError, Capabilities, PhaseSpec, RunRecord, WorkloadRequest};

/// Noise and fault injection parameters for the simulator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Relative standard deviation of each power sample.
    pub power_sigma_rel: f64,
    /// Uniform sampler jitter half-width around the nominal cadence.
    pub cadence_jitter_s: f64,
    /// Uniform half-width of the energy counter's relative bias per run.
    pub counter_bias_max_rel: f64,
    /// Probability that a run is perturbed by a transient clock throttle.
    pub throttle_artefact_prob: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            power_sigma_rel: 0.005,
            cadence_jitter_s: 0.005,
            counter_bias_max_rel: 0.01,
            throttle_artefact_prob: 0.0,
        }
    }
}

/// Standard normal draw via the Box-Muller transform, so the simulator only
/// depends on uniform generation and stays identical across RNG crates.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone)]
pub struct SimBackend<R> {
    device: DeviceSpec<R>,
    profiles: ProfileSet<R>,
    noise: NoiseParams,
}

impl<R: Real> SimBackend<R> {
    pub fn new(device: DeviceSpec<R>, profiles: ProfileSet<R>) -> Self {
        Self {
            device,
            profiles,
            noise: NoiseParams::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseParams) -> Self {
        self.noise = noise;
        self
    }

    pub fn device(&self) -> &DeviceSpec<R> {
        &self.device
    }

    pub fn profiles(&self) -> &ProfileSet<R> {
        &self.profiles
    }

    fn phase_power_model(
        &self,
        profile: &ArchitectureProfile<R>,
        phase: &PhaseSpec,
    ) -> (PowerModel<R>, R) {
        match phase {
            PhaseSpec::Decode { batch, .. } => (
                profile.decode_power_model(&self.device),
                profile.util_scale(*batch),
            ),
            PhaseSpec::Prefill { .. } => (profile.prefill_power_model(&self.device), R::one()),
        }
    }

    fn wall_time_s(
        &self,
        profile: &ArchitectureProfile<R>,
        phase: &PhaseSpec,
        clock_mhz: u32,
    ) -> R {
        match *phase {
            PhaseSpec::Decode {
                batch,
                context,
                output_tokens,
            } => {
                let step = profile.decode_step_time_s(&self.device, batch, context, clock_mhz);
                step * R::of(output_tokens as f64)
            }
            PhaseSpec::Prefill { batch, context } => {
                profile.prefill_time_s(&self.device, batch, context, clock_mhz)
            }
        }
    }

    /// Next supported lock strictly below `clock_mhz`, if any.
    fn next_lower_lock(&self, clock_mhz: u32) -> Option<u32> {
        self.device
            .supported_locks_mhz
            .iter()
            .copied()
            .filter(|&c| c < clock_mhz)
            .max()
    }
}

impl<R: Real> Backend<R> for SimBackend<R> {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: format!("sim:{}", self.device.name),
            supports_clock_lock: true,
            supports_power_cap: true,
            supports_energy_counter: true,
            nominal_cadence_s: DEFAULT_CADENCE_S,
        }
    }

    fn run(&mut self, request: &WorkloadRequest<R>) -> Result<RunRecord<R>, BackendError> {
        request.phase.validate()?;
        let profile = self
            .profiles
            .get(&request.arch)
            .map_err(|_| BackendError::UnknownArch(request.arch.clone()))?
            .clone();

        let (power_model, util_scale) = self.phase_power_model(&profile, &request.phase);
        let mut dvfs = resolve_lever(&self.device, request.lever, &power_model, util_scale);

        let mut rng = ChaCha20Rng::seed_from_u64(request.rng_seed);
        let mut throttle_artefact = false;
        if self.noise.throttle_artefact_prob > 0.0
            && rng.gen::<f64>() < self.noise.throttle_artefact_prob
        {
            if let Some(lower) = self.next_lower_lock(dvfs.actual_clock_mhz) {
                dvfs.actual_clock_mhz = lower;
                throttle_artefact = true;
            }
        }

        let wall = self.wall_time_s(&profile, &request.phase, dvfs.actual_clock_mhz);
        let true_power = power_model.power_w(dvfs.actual_clock_mhz, util_scale);
        let temp_c = R::of(42.0 + 3.0 * rng.gen::<f64>());

        let noisy_power = |rng: &mut ChaCha20Rng| {
            let eps = self.noise.power_sigma_rel * standard_normal(rng);
            true_power * R::of(1.0 + eps)
        };

        let mut builder = TraceBuilder::with_cadence(R::of(DEFAULT_CADENCE_S));
        let mut t = 0.0f64;
        let wall_f = wall.to_f64_lossy();
        loop {
            builder.push(PowerSample {
                timestamp_s: R::of(t),
                power_w: noisy_power(&mut rng),
                sm_clock_mhz: dvfs.actual_clock_mhz,
                temp_c,
            })?;
            if t >= wall_f {
                break;
            }
            let jitter = self.noise.cadence_jitter_s * (2.0 * rng.gen::<f64>() - 1.0);
            t += DEFAULT_CADENCE_S + jitter;
        }
        let trace = builder.build()?;

        let true_energy = true_power * wall;
        let counter_bias = self.noise.counter_bias_max_rel * (2.0 * rng.gen::<f64>() - 1.0);
        let mut window = PhaseWindow::new(R::zero(), wall);
        window.snapshot_power_w = Some(noisy_power(&mut rng));
        window.counter_energy_j = Some(true_energy * R::of(1.0 + counter_bias));

        let measurement = energy_with_fallback(&trace, &window, R::of(FALLBACK_THRESHOLD_S))?;
        let measurement = cross_validate(
            measurement,
            &window,
            R::of(COUNTER_MIN_DURATION_S),
            R::of(COUNTER_TOLERANCE),
        );

        let work_tokens = request.phase.work_tokens();
        let work = R::of(work_tokens as f64);
        Ok(RunRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config_id: request.config_id.clone(),
            arch: request.arch.clone(),
            phase: request.phase,
            lever: request.lever,
            lever_label: request.lever.label(),
            rep_index: request.rep_index,
            warmup: request.warmup,
            rng_seed: request.rng_seed,
            dvfs,
            wall_time_s: wall,
            work_tokens,
            throughput_tokens_per_s: work / wall,
            energy: measurement,
            avg_power_w: measurement.energy_j / wall,
            energy_per_token_j: measurement.energy_j / work,
            sample_count: trace.samples().len(),
            throttle_artefact,
            trace: request.keep_trace.then_some(trace),
        })
    }

    fn reset(&mut self) -> Result<(), BackendError> {
        Ok(())
    }
}
