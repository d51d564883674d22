//! Real-hardware backend.
//!
//! Drives an actual GPU through the vendor management utility: it applies
//! the lever (`-lgc` / `-pl` / reset), launches the serving workload from a
//! command template, polls power/clock/temperature at the nominal cadence,
//! and integrates the resulting trace exactly like the simulator path.
//!
//! The utility and a live serving endpoint are required, so this backend
//! probes for them up front and reports a clear `Unavailable` error with a
//! fallback hint when they are missing.

use std::process::{Command, Stdio};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::device::{ControlLever, DeviceSpec, DvfsState};
use crate::num::Real;
use crate::stats::median;
use crate::telemetry::{
    cross_validate, energy_with_fallback, PhaseWindow, PowerSample, TraceBuilder,
    COUNTER_MIN_DURATION_S, COUNTER_TOLERANCE, DEFAULT_CADENCE_S, FALLBACK_THRESHOLD_S,
};
use crate::{RECORD_SCHEMA_VERSION, TOOL_VERSION};

use super::{Backend, BackendError, Capabilities, RunRecord, WorkloadRequest};

/// Configuration for the real-hardware backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealBackendConfig {
    /// Vendor management utility, e.g. `nvidia-smi`.
    pub management_cmd: String,
    /// Shell command template that performs one measured phase against the
    /// serving endpoint. Placeholders: `{arch}`, `{phase}`, `{batch}`,
    /// `{context}`, `{output_tokens}`.
    pub workload_command_template: String,
    pub gpu_index: u32,
}

impl Default for RealBackendConfig {
    fn default() -> Self {
        Self {
            management_cmd: "nvidia-smi".to_string(),
            workload_command_template: "serve-bench --arch {arch} --phase {phase} \
                 --batch {batch} --context {context} --output-tokens {output_tokens}"
                .to_string(),
            gpu_index: 0,
        }
    }
}

/// Expands the workload command template for one request.
pub fn expand_template<R: Real>(template: &str, request: &WorkloadRequest<R>) -> String {
    let output_tokens = match request.phase {
        super::PhaseSpec::Decode { output_tokens, .. } => output_tokens,
        super::PhaseSpec::Prefill { .. } => 0,
    };
    template
        .replace("{arch}", &request.arch)
        .replace("{phase}", request.phase.phase_name())
        .replace("{batch}", &request.phase.batch().to_string())
        .replace("{context}", &request.phase.context().to_string())
        .replace("{output_tokens}", &output_tokens.to_string())
}

/// Parses one `--query-gpu=power.draw,clocks.sm,temperature.gpu` CSV line.
pub fn parse_sample_line<R: Real>(line: &str) -> Option<(R, u32, R)> {
    let mut parts = line.split(',').map(str::trim);
    let power: f64 = parts.next()?.parse().ok()?;
    let clock: u32 = parts.next()?.parse().ok()?;
    let temp: f64 = parts.next()?.parse().ok()?;
    Some((R::of(power), clock, R::of(temp)))
}

#[derive(Debug)]
pub struct RealBackend<R> {
    device: DeviceSpec<R>,
    config: RealBackendConfig,
}

impl<R: Real> RealBackend<R> {
    /// Verifies the management utility answers before constructing the
    /// backend.
    pub fn probe(device: DeviceSpec<R>, config: RealBackendConfig) -> Result<Self, BackendError> {
        let available = Command::new(&config.management_cmd)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false);
        if !available {
            return Err(BackendError::Unavailable {
                reason: format!(
                    "management utility '{}' is not on PATH or returned an error",
                    config.management_cmd
                ),
                hint: "install the vendor GPU management utility and point \
                       --backend real at a live serving endpoint, or use the \
                       hardware-free simulator with --backend sim"
                    .to_string(),
            });
        }
        Ok(Self { device, config })
    }

    fn management(&self, args: &[String]) -> Result<(), BackendError> {
        let out = Command::new(&self.config.management_cmd)
            .args(args)
            .output()?;
        if !out.status.success() {
            return Err(BackendError::CommandFailed {
                status: out.status.code().unwrap_or(-1),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(())
    }

    fn apply_lever(&self, lever: &ControlLever<R>) -> Result<(), BackendError> {
        let i = self.config.gpu_index.to_string();
        match lever {
            ControlLever::FreeRun => self.management(&["-i".into(), i, "-rgc".into()]),
            ControlLever::LockMhz { mhz } => {
                self.management(&["-i".into(), i, "-lgc".into(), format!("{mhz},{mhz}")])
            }
            ControlLever::CapW { watts } => self.management(&[
                "-i".into(),
                i,
                "-pl".into(),
                format!("{:.0}", watts.to_f64_lossy()),
            ]),
        }
    }

    fn query_energy_counter_j(&self) -> Option<R> {
        let out = Command::new(&self.config.management_cmd)
            .args([
                "-i",
                &self.config.gpu_index.to_string(),
                "--query-gpu=total.energy.consumption",
                "--format=csv,noheader,nounits",
            ])
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        let millijoules: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().ok()?;
        Some(R::of(millijoules / 1000.0))
    }

    fn sample_once(&self) -> Result<Option<(R, u32, R)>, BackendError> {
        let out = Command::new(&self.config.management_cmd)
            .args([
                "-i",
                &self.config.gpu_index.to_string(),
                "--query-gpu=power.draw,clocks.sm,temperature.gpu",
                "--format=csv,noheader,nounits",
            ])
            .output()?;
        if !out.status.success() {
            return Ok(None);
        }
        Ok(parse_sample_line(
            String::from_utf8_lossy(&out.stdout).trim(),
        ))
    }
}

impl<R: Real> Backend<R> for RealBackend<R> {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: format!("real:{}", self.device.name),
            supports_clock_lock: true,
            supports_power_cap: true,
            supports_energy_counter: true,
            nominal_cadence_s: DEFAULT_CADENCE_S,
        }
    }

    fn run(&mut self, request: &WorkloadRequest<R>) -> Result<RunRecord<R>, BackendError> {
        request.phase.validate()?;
        self.apply_lever(&request.lever)?;
        let counter_start = self.query_energy_counter_j();

        let command = expand_template(&self.config.workload_command_template, request);
        let start = Instant::now();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()?;

        let mut builder = TraceBuilder::with_cadence(R::of(DEFAULT_CADENCE_S));
        let mut clocks: Vec<f64> = Vec::new();
        loop {
            let t = R::of(start.elapsed().as_secs_f64());
            match self.sample_once()? {
                Some((power, clock, temp)) => {
                    builder.push(PowerSample {
                        timestamp_s: t,
                        power_w: power,
                        sm_clock_mhz: clock,
                        temp_c: temp,
                    })?;
                    clocks.push(clock as f64);
                }
                None => builder.mark_gap(),
            }
            if let Some(status) = child.try_wait()? {
                if !status.success() {
                    let mut stderr = String::new();
                    if let Some(mut pipe) = child.stderr.take() {
                        use std::io::Read;
                        let _ = pipe.read_to_string(&mut stderr);
                    }
                    return Err(BackendError::CommandFailed {
                        status: status.code().unwrap_or(-1),
                        stderr,
                    });
                }
                break;
            }
            std::thread::sleep(std::time::Duration::from_secs_f64(DEFAULT_CADENCE_S));
        }
        let wall = R::of(start.elapsed().as_secs_f64());
        let trace = builder.build()?;

        let mut window = PhaseWindow::new(R::zero(), wall);
        window.snapshot_power_w = trace.samples().last().map(|s| s.power_w);
        if let (Some(start_j), Some(end_j)) = (counter_start, self.query_energy_counter_j()) {
            window.counter_energy_j = Some(end_j - start_j);
        }
        let measurement = energy_with_fallback(&trace, &window, R::of(FALLBACK_THRESHOLD_S))?;
        let measurement = cross_validate(
            measurement,
            &window,
            R::of(COUNTER_MIN_DURATION_S),
            R::of(COUNTER_TOLERANCE),
        );

        let observed_clock = median(&clocks).unwrap_or(0.0).round() as u32;
        let cap_limited = matches!(request.lever, ControlLever::CapW { .. })
            && observed_clock + 15 < self.device.base_clock_mhz;
        let dvfs = DvfsState {
            requested: request.lever,
            actual_clock_mhz: observed_clock,
            cap_limited,
            cap_unsatisfiable: cap_limited && observed_clock <= self.device.min_clock_mhz,
        };

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
            throttle_artefact: false,
            trace: request.keep_trace.then_some(trace),
        })
    }

    fn reset(&mut self) -> Result<(), BackendError> {
        let i = self.config.gpu_index.to_string();
        self.management(&["-i".into(), i.clone(), "-rgc".into()])?;
        // Restoring the cap to the device TDP undoes any -pl setting.
        self.management(&[
            "-i".into(),
            i,
            "-pl".into(),
            format!("{:.0}", self.device.tdp_w.to_f64_lossy()),
        ])
    }
}
