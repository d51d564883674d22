//! Power telemetry: sampled traces, trapezoidal energy integration, the
//! short-window snapshot fallback, and counter cross-validation.
//!
//! Samplers poll at a nominal 50 ms cadence. Phase windows shorter than the
//! fallback threshold cannot be integrated reliably, so they use
//! `snapshot power x duration` instead. An on-device cumulative energy
//! counter, when present, cross-validates the trapezoid result but never
//! overrides it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{half, Real};

/// Nominal sampler cadence in seconds.
pub const DEFAULT_CADENCE_S: f64 = 0.050;
/// Windows shorter than this integrate via the snapshot fallback.
pub const FALLBACK_THRESHOLD_S: f64 = 0.100;
/// Counter cross-validation only applies to windows at least this long.
pub const COUNTER_MIN_DURATION_S: f64 = 0.200;
/// Relative counter/trapezoid gap tolerated before flagging disagreement.
pub const COUNTER_TOLERANCE: f64 = 0.02;
/// Sanity bound on a single power reading (2x the largest supported TDP).
pub const MAX_POWER_SANITY_W: f64 = 1400.0;
/// Consecutive samples may be spaced within this multiple range of cadence.
pub const SPACING_MIN_FACTOR: f64 = 0.5;
pub const SPACING_MAX_FACTOR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("window holds {found} samples, trapezoid integration needs at least 2")]
    InsufficientSamples { found: usize },
    #[error("window [{start}, {end}] exceeds trace span [{first}, {last}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        first: f64,
        last: f64,
    },
    #[error("window end {end} is not after start {start}")]
    InvalidWindow { start: f64, end: f64 },
    #[error("window shorter than fallback threshold but no snapshot power present")]
    MissingSnapshot,
    #[error("sample {index} timestamp {timestamp} does not increase monotonically")]
    NonMonotonicTimestamp { index: usize, timestamp: f64 },
    #[error("sample {index} power {power} W outside [0, {bound}] W sanity bound")]
    PowerOutOfBounds {
        index: usize,
        power: f64,
        bound: f64,
    },
    #[error(
        "sample {index} spacing {spacing}s outside [{min}s, {max}s] for cadence \
         {cadence}s (no gap marker present)"
    )]
    IrregularSpacing {
        index: usize,
        spacing: f64,
        min: f64,
        max: f64,
        cadence: f64,
    },
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One sampler reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample<R> {
    pub timestamp_s: R,
    pub power_w: R,
    pub sm_clock_mhz: u32,
    pub temp_c: R,
}

/// An immutable, validated sequence of samples.
///
/// `gap_before[i]` marks a sampler discontinuity between samples `i-1` and
/// `i`; integration across a gap treats the bounding samples as linear and
/// flags the measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace<R> {
    samples: Vec<PowerSample<R>>,
    gap_before: Vec<usize>,
    nominal_cadence_s: R,
}

impl<R: Real> PowerTrace<R> {
    pub fn samples(&self) -> &[PowerSample<R>] {
        &self.samples
    }

    pub fn gap_indices(&self) -> &[usize] {
        &self.gap_before
    }

    pub fn nominal_cadence_s(&self) -> R {
        self.nominal_cadence_s
    }

    pub fn span(&self) -> Option<(R, R)> {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => Some((a.timestamp_s, b.timestamp_s)),
            _ => None,
        }
    }
}

/// Single-writer trace construction with validation on every push.
#[derive(Debug)]
pub struct TraceBuilder<R> {
    samples: Vec<PowerSample<R>>,
    gap_before: Vec<usize>,
    pending_gap: bool,
    nominal_cadence_s: R,
    max_power_w: R,
}

impl<R: Real> TraceBuilder<R> {
    pub fn new() -> Self {
        Self::with_cadence(R::of(DEFAULT_CADENCE_S))
    }

    pub fn with_cadence(nominal_cadence_s: R) -> Self {
        Self {
            samples: Vec::new(),
            gap_before: Vec::new(),
            pending_gap: false,
            nominal_cadence_s,
            max_power_w: R::of(MAX_POWER_SANITY_W),
        }
    }

    pub fn max_power(mut self, bound_w: R) -> Self {
        self.max_power_w = bound_w;
        self
    }

    /// Marks a sampler discontinuity before the next pushed sample.
    pub fn mark_gap(&mut self) {
        self.pending_gap = true;
    }

    pub fn push(&mut self, sample: PowerSample<R>) -> Result<(), TelemetryError> {
        let index = self.samples.len();
        if sample.power_w < R::zero() || sample.power_w > self.max_power_w {
            return Err(TelemetryError::PowerOutOfBounds {
                index,
                power: sample.power_w.to_f64_lossy(),
                bound: self.max_power_w.to_f64_lossy(),
            });
        }
        if let Some(prev) = self.samples.last() {
            let spacing = sample.timestamp_s - prev.timestamp_s;
            if spacing <= R::zero() {
                return Err(TelemetryError::NonMonotonicTimestamp {
                    index,
                    timestamp: sample.timestamp_s.to_f64_lossy(),
                });
            }
            if !self.pending_gap {
                let min = self.nominal_cadence_s * R::of(SPACING_MIN_FACTOR);
                let max = self.nominal_cadence_s * R::of(SPACING_MAX_FACTOR);
                if spacing < min || spacing > max {
                    return Err(TelemetryError::IrregularSpacing {
                        index,
                        spacing: spacing.to_f64_lossy(),
                        min: min.to_f64_lossy(),
                        max: max.to_f64_lossy(),
                        cadence: self.nominal_cadence_s.to_f64_lossy(),
                    });
                }
            }
        }
        if self.pending_gap && !self.samples.is_empty() {
            self.gap_before.push(index);
        }
        self.pending_gap = false;
        self.samples.push(sample);
        Ok(())
    }

    pub fn build(self) -> Result<PowerTrace<R>, TelemetryError> {
        if self.samples.is_empty() {
            return Err(TelemetryError::EmptyTrace);
        }
        Ok(PowerTrace {
            samples: self.samples,
            gap_before: self.gap_before,
            nominal_cadence_s: self.nominal_cadence_s,
        })
    }
}

impl<R: Real> Default for TraceBuilder<R> {
    fn default() -> Self {
        Self::new()
    }
}

/// Integration bounds plus the auxiliary readings used by fallback and
/// cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow<R> {
    pub start_s: R,
    pub end_s: R,
    /// Instantaneous power reading taken at the end of the phase.
    pub snapshot_power_w: Option<R>,
    /// Cumulative energy counter delta over the window, when the device
    /// exposes one.
    pub counter_energy_j: Option<R>,
}

impl<R: Real> PhaseWindow<R> {
    pub fn new(start_s: R, end_s: R) -> Self {
        Self {
            start_s,
            end_s,
            snapshot_power_w: None,
            counter_energy_j: None,
        }
    }

    pub fn duration_s(&self) -> R {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    Trapezoid,
    SnapshotFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterValidation {
    Agrees,
    Disagrees,
    CounterUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMeasurement<R> {
    pub energy_j: R,
    pub method: EnergyMethod,
    pub validation: CounterValidation,
    /// Relative counter/trapezoid gap when validation applied.
    pub relative_gap: Option<R>,
    /// True when the integrated span crossed a sampler gap marker.
    pub gap_flagged: bool,
}

fn interpolate<R: Real>(a: &PowerSample<R>, b: &PowerSample<R>, t: R) -> R {
    let dt = b.timestamp_s - a.timestamp_s;
    if dt <= R::zero() {
        return a.power_w;
    }
    let frac = (t - a.timestamp_s) / dt;
    a.power_w + (b.power_w - a.power_w) * frac
}

/// Trapezoidal energy over `window`, interpolating the boundary power from
/// the nearest enclosing sample pairs.
///
/// Returns the energy in joules plus a flag set when the window crosses a
/// sampler gap. Requires at least two samples inside the window.
pub fn integrate_energy<R: Real>(
    trace: &PowerTrace<R>,
    window: &PhaseWindow<R>,
) -> Result<(R, bool), TelemetryError> {
    let samples = trace.samples();
    if samples.is_empty() {
        return Err(TelemetryError::EmptyTrace);
    }
    if window.end_s <= window.start_s {
        return Err(TelemetryError::InvalidWindow {
            start: window.start_s.to_f64_lossy(),
            end: window.end_s.to_f64_lossy(),
        });
    }
    let (first, last) = trace.span().expect("non-empty trace has a span");
    if window.start_s < first || window.end_s > last {
        return Err(TelemetryError::WindowOutOfRange {
            start: window.start_s.to_f64_lossy(),
            end: window.end_s.to_f64_lossy(),
            first: first.to_f64_lossy(),
            last: last.to_f64_lossy(),
        });
    }

    // Samples with start <= t <= end.
    let lo = samples.partition_point(|s| s.timestamp_s < window.start_s);
    let hi = samples.partition_point(|s| s.timestamp_s <= window.end_s);
    let inside = hi - lo;
    if inside < 2 {
        return Err(TelemetryError::InsufficientSamples { found: inside });
    }

    let mut points: Vec<(R, R)> = Vec::with_capacity(inside + 2);
    if samples[lo].timestamp_s > window.start_s {
        // lo > 0 because start >= first sample timestamp.
        let p = interpolate(&samples[lo - 1], &samples[lo], window.start_s);
        points.push((window.start_s, p));
    }
    for s in &samples[lo..hi] {
        points.push((s.timestamp_s, s.power_w));
    }
    if samples[hi - 1].timestamp_s < window.end_s {
        let p = interpolate(&samples[hi - 1], &samples[hi], window.end_s);
        points.push((window.end_s, p));
    }

    let mut energy = R::zero();
    for pair in points.windows(2) {
        let (t0, p0) = pair[0];
        let (t1, p1) = pair[1];
        energy += half(p0 + p1) * (t1 - t0);
    }

    let gap_flagged = trace.gap_indices().iter().any(|&g| {
        g > 0
            && samples[g].timestamp_s > window.start_s
            && samples[g - 1].timestamp_s < window.end_s
    });

    Ok((energy, gap_flagged))
}

/// Energy over `window` using the trapezoid when the window is at least
/// `fallback_threshold_s` long, otherwise `snapshot power x duration`.
///
/// A window of exactly the threshold duration uses the trapezoid. The result
/// carries `CounterValidation::CounterUnavailable` until [`cross_validate`]
/// runs.
pub fn energy_with_fallback<R: Real>(
    trace: &PowerTrace<R>,
    window: &PhaseWindow<R>,
    fallback_threshold_s: R,
) -> Result<EnergyMeasurement<R>, TelemetryError> {
    if window.end_s <= window.start_s {
        return Err(TelemetryError::InvalidWindow {
            start: window.start_s.to_f64_lossy(),
            end: window.end_s.to_f64_lossy(),
        });
    }
    if window.duration_s() < fallback_threshold_s {
        let snapshot = window
            .snapshot_power_w
            .ok_or(TelemetryError::MissingSnapshot)?;
        return Ok(EnergyMeasurement {
            energy_j: snapshot * window.duration_s(),
            method: EnergyMethod::SnapshotFallback,
            validation: CounterValidation::CounterUnavailable,
            relative_gap: None,
            gap_flagged: false,
        });
    }
    let (energy_j, gap_flagged) = integrate_energy(trace, window)?;
    Ok(EnergyMeasurement {
        energy_j,
        method: EnergyMethod::Trapezoid,
        validation: CounterValidation::CounterUnavailable,
        relative_gap: None,
        gap_flagged,
    })
}

/// Cross-validates a trapezoid measurement against the window's energy
/// counter. The counter never overrides the trapezoid result; it only sets
/// the validation verdict and relative gap.
///
/// Counters are unreliable below `min_duration_s`, so shorter windows (and
/// snapshot-fallback measurements, which are shorter still) always report
/// `CounterUnavailable`.
pub fn cross_validate<R: Real>(
    measurement: EnergyMeasurement<R>,
    window: &PhaseWindow<R>,
    min_duration_s: R,
    tolerance: R,
) -> EnergyMeasurement<R> {
    let mut out = measurement;
    out.validation = CounterValidation::CounterUnavailable;
    out.relative_gap = None;
    if measurement.method != EnergyMethod::Trapezoid {
        return out;
    }
    if window.duration_s() < min_duration_s {
        return out;
    }
    let Some(counter) = window.counter_energy_j else {
        return out;
    };
    if measurement.energy_j <= R::zero() {
        return out;
    }
    let gap = ((counter - measurement.energy_j) / measurement.energy_j).abs();
    out.relative_gap = Some(gap);
    out.validation = if gap <= tolerance {
        CounterValidation::Agrees
    } else {
        CounterValidation::Disagrees
    };
    out
}

const TRACE_HEADER: &str = "timestamp_s,power_w,sm_clock_mhz,temp_c";
const GAP_MARKER: &str = "# gap";

/// Writes a trace in its interchange CSV form. Sampler gaps appear as
/// explicit `# gap` marker rows before the sample that follows the gap.
pub fn write_trace_csv<R: Real, W: Write>(
    trace: &PowerTrace<R>,
    mut out: W,
) -> Result<(), TelemetryError> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (i, s) in trace.samples().iter().enumerate() {
        if trace.gap_indices().contains(&i) {
            writeln!(out, "{GAP_MARKER}")?;
        }
        writeln!(
            out,
            "{:.6},{:.6},{},{:.3}",
            s.timestamp_s.to_f64_lossy(),
            s.power_w.to_f64_lossy(),
            s.sm_clock_mhz,
            s.temp_c.to_f64_lossy(),
        )?;
    }
    Ok(())
}

/// Reads the interchange CSV form, preserving `# gap` markers. Lines starting
/// with `#` that are not gap markers are treated as comments.
pub fn read_trace_csv<R: Real, B: BufRead>(
    input: B,
    nominal_cadence_s: R,
) -> Result<PowerTrace<R>, TelemetryError> {
    let mut builder = TraceBuilder::with_cadence(nominal_cadence_s);
    let mut saw_header = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if trimmed == GAP_MARKER {
                builder.mark_gap();
            }
            continue;
        }
        if !saw_header {
            if trimmed != TRACE_HEADER {
                return Err(TelemetryError::Parse {
                    line: lineno + 1,
                    message: format!("expected header '{TRACE_HEADER}', got '{trimmed}'"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(TelemetryError::Parse {
                line: lineno + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_real = |text: &str, what: &str| -> Result<R, TelemetryError> {
            text.parse::<f64>()
                .map(R::of)
                .map_err(|e| TelemetryError::Parse {
                    line: lineno + 1,
                    message: format!("bad {what} '{text}': {e}"),
                })
        };
        let sample = PowerSample {
            timestamp_s: parse_real(fields[0], "timestamp_s")?,
            power_w: parse_real(fields[1], "power_w")?,
            sm_clock_mhz: fields[2].parse().map_err(|e| TelemetryError::Parse {
                line: lineno + 1,
                message: format!("bad sm_clock_mhz '{}': {e}", fields[2]),
            })?,
            temp_c: parse_real(fields[3], "temp_c")?,
        };
        builder.push(sample)?;
    }
    builder.build()
}
