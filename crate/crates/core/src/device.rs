//! Device model: static GPU specifications, the affine power model, and the
//! driver's observed DVFS behaviour under clock locks and power caps.
//!
//! Lever semantics mirror what the driver actually does rather than what the
//! control API nominally promises:
//!
//! * free-running (no lever) boosts to the boost clock;
//! * lock requests at or above the base clock settle at the base clock;
//! * lock requests between the minimum and base clocks are honoured exactly;
//! * a configured power cap leaves the device at the base clock unless the
//!   cap actually binds, in which case the driver scales the clock down until
//!   the modelled power meets the cap.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device spec io: {0}")]
    Io(#[from] std::io::Error),
    #[error("device spec parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("device spec serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("device spec invalid: {0}")]
    Invalid(String),
}

/// Static description of one GPU SKU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec<R> {
    pub name: String,
    pub idle_power_w: R,
    pub tdp_w: R,
    pub base_clock_mhz: u32,
    pub boost_clock_mhz: u32,
    pub min_clock_mhz: u32,
    /// Lock points exercised by sweeps; the driver accepts finer steps.
    pub supported_locks_mhz: Vec<u32>,
    /// Peak dense math throughput at the base clock, FLOP/s.
    pub peak_flops_per_s: R,
    pub memory_bandwidth_bytes_per_s: R,
}

impl<R: Real> DeviceSpec<R> {
    /// H200 SXM reference specification.
    pub fn h200() -> Self {
        Self {
            name: "H200".to_string(),
            idle_power_w: R::of(75.0),
            tdp_w: R::of(700.0),
            base_clock_mhz: 1830,
            boost_clock_mhz: 1980,
            min_clock_mhz: 390,
            supported_locks_mhz: vec![390, 780, 1185, 1590, 1830, 1980],
            peak_flops_per_s: R::of(989e12),
            memory_bandwidth_bytes_per_s: R::of(4.8e12),
        }
    }

    /// FLOP-per-byte ratio above which kernels are compute-bound.
    pub fn ridge_intensity(&self) -> R {
        self.peak_flops_per_s / self.memory_bandwidth_bytes_per_s
    }

    pub fn is_supported_lock(&self, mhz: u32) -> bool {
        self.supported_locks_mhz.contains(&mhz)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.min_clock_mhz == 0 || self.min_clock_mhz > self.base_clock_mhz {
            return Err(DeviceError::Invalid(format!(
                "min clock {} must be in (0, base {}]",
                self.min_clock_mhz, self.base_clock_mhz
            )));
        }
        if self.boost_clock_mhz < self.base_clock_mhz {
            return Err(DeviceError::Invalid(format!(
                "boost clock {} below base clock {}",
                self.boost_clock_mhz, self.base_clock_mhz
            )));
        }
        if self.idle_power_w < R::zero() || self.tdp_w <= self.idle_power_w {
            return Err(DeviceError::Invalid(
                "tdp must exceed idle power and idle must be non-negative".to_string(),
            ));
        }
        if self.supported_locks_mhz.is_empty() {
            return Err(DeviceError::Invalid("no supported locks".to_string()));
        }
        Ok(())
    }

    pub fn load_toml(path: &Path) -> Result<Self, DeviceError>
    where
        R: serde::de::DeserializeOwned,
    {
        let text = fs::read_to_string(path)?;
        let spec: Self = toml::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save_toml(&self, path: &Path) -> Result<(), DeviceError>
    where
        R: Serialize,
    {
        fs::write(path, toml::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// The control lever applied to the device for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlLever<R> {
    /// No lever: the device boosts freely.
    FreeRun,
    /// SM clock lock request in MHz.
    LockMhz { mhz: u32 },
    /// Power cap in watts.
    CapW { watts: R },
}

impl<R: Real> ControlLever<R> {
    /// Stable short label used in run records and report columns.
    pub fn label(&self) -> String {
        match self {
            ControlLever::FreeRun => "free_run".to_string(),
            ControlLever::LockMhz { mhz } => format!("lock_{mhz}"),
            ControlLever::CapW { watts } => format!("cap_{:.0}", watts.to_f64_lossy()),
        }
    }

    /// Inverse of [`label`](Self::label): `free_run`, `lock_<mhz>`, or
    /// `cap_<watts>`.
    pub fn parse_label(label: &str) -> Result<Self, DeviceError> {
        if label == "free_run" {
            return Ok(ControlLever::FreeRun);
        }
        if let Some(mhz) = label.strip_prefix("lock_") {
            let mhz: u32 = mhz
                .parse()
                .map_err(|_| DeviceError::Invalid(format!("bad lock label {label:?}")))?;
            return Ok(ControlLever::LockMhz { mhz });
        }
        if let Some(watts) = label.strip_prefix("cap_") {
            let watts: f64 = watts
                .parse()
                .map_err(|_| DeviceError::Invalid(format!("bad cap label {label:?}")))?;
            return Ok(ControlLever::CapW {
                watts: R::of(watts),
            });
        }
        Err(DeviceError::Invalid(format!(
            "unknown lever label {label:?} (expected free_run, lock_<mhz>, or cap_<watts>)"
        )))
    }
}

/// Resolved DVFS outcome of applying a lever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvfsState<R> {
    pub requested: ControlLever<R>,
    /// Clock the device actually settles at.
    pub actual_clock_mhz: u32,
    /// True when a configured cap forced the clock below base.
    pub cap_limited: bool,
    /// True when even the minimum clock cannot satisfy the cap.
    pub cap_unsatisfiable: bool,
}

/// Affine power model for one architecture/phase pair on one device:
///
/// `P(clock, u) = idle + u * (mem_static + sm_dynamic_ref * (clock/base)^alpha)`
///
/// where `u` is the batch utilization scale (1 at batch size 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel<R> {
    pub idle_w: R,
    /// Clock-insensitive dynamic draw (memory subsystem), watts at u = 1.
    pub mem_static_w: R,
    /// Clock-proportional SM draw at the base clock, watts at u = 1.
    pub sm_dynamic_ref_w: R,
    /// Exponent on the clock ratio; close to 1 on measured hardware.
    pub clock_exponent: R,
    pub base_clock_mhz: u32,
}

impl<R: Real> PowerModel<R> {
    pub fn new(device: &DeviceSpec<R>, mem_static_w: R, sm_dynamic_ref_w: R) -> Self {
        Self {
            idle_w: device.idle_power_w,
            mem_static_w,
            sm_dynamic_ref_w,
            clock_exponent: R::one(),
            base_clock_mhz: device.base_clock_mhz,
        }
    }

    /// Total board power at `clock_mhz` with batch utilization scale `u`.
    pub fn power_w(&self, clock_mhz: u32, util_scale: R) -> R {
        let ratio = R::of(clock_mhz as f64) / R::of(self.base_clock_mhz as f64);
        self.idle_w
            + util_scale
                * (self.mem_static_w + self.sm_dynamic_ref_w * ratio.powf(self.clock_exponent))
    }
}

/// Resolves a lever to the clock the device settles at.
///
/// Cap resolution needs the power model and utilization scale of the phase
/// being run, because whether a cap binds depends on the workload's draw.
pub fn resolve_lever<R: Real>(
    device: &DeviceSpec<R>,
    lever: ControlLever<R>,
    power: &PowerModel<R>,
    util_scale: R,
) -> DvfsState<R> {
    match lever {
        ControlLever::FreeRun => DvfsState {
            requested: lever,
            actual_clock_mhz: device.boost_clock_mhz,
            cap_limited: false,
            cap_unsatisfiable: false,
        },
        ControlLever::LockMhz { mhz } => {
            let actual = mhz.clamp(device.min_clock_mhz, device.base_clock_mhz);
            DvfsState {
                requested: lever,
                actual_clock_mhz: actual,
                cap_limited: false,
                cap_unsatisfiable: false,
            }
        }
        ControlLever::CapW { watts } => {
            let at_base = power.power_w(device.base_clock_mhz, util_scale);
            if at_base <= watts {
                // Inert cap: the driver keeps the base clock.
                return DvfsState {
                    requested: lever,
                    actual_clock_mhz: device.base_clock_mhz,
                    cap_limited: false,
                    cap_unsatisfiable: false,
                };
            }
            // Solve power(c) = cap for the clock ratio (exponent ~1, so a
            // direct inversion; for other exponents take the root).
            let dynamic = (watts - power.idle_w - util_scale * power.mem_static_w)
                / (util_scale * power.sm_dynamic_ref_w);
            let min_ratio =
                R::of(device.min_clock_mhz as f64) / R::of(device.base_clock_mhz as f64);
            if dynamic <= R::zero() || dynamic.powf(R::one() / power.clock_exponent) < min_ratio {
                return DvfsState {
                    requested: lever,
                    actual_clock_mhz: device.min_clock_mhz,
                    cap_limited: true,
                    cap_unsatisfiable: true,
                };
            }
            let ratio = dynamic.powf(R::one() / power.clock_exponent);
            let clock = (ratio * R::of(device.base_clock_mhz as f64))
                .to_f64_lossy()
                .round() as u32;
            DvfsState {
                requested: lever,
                actual_clock_mhz: clock.clamp(device.min_clock_mhz, device.base_clock_mhz),
                cap_limited: true,
                cap_unsatisfiable: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h200() -> DeviceSpec<f64> {
        DeviceSpec::h200()
    }

    #[test]
    fn lever_labels_round_trip() {
        let levers: Vec<ControlLever<f64>> = vec![
            ControlLever::FreeRun,
            ControlLever::LockMhz { mhz: 1185 },
            ControlLever::CapW { watts: 280.0 },
        ];
        for lever in levers {
            let parsed = ControlLever::<f64>::parse_label(&lever.label()).unwrap();
            assert_eq!(parsed, lever);
        }
        assert!(ControlLever::<f64>::parse_label("warp_9").is_err());
        assert!(ControlLever::<f64>::parse_label("lock_fast").is_err());
    }

    fn gqa_decode_power() -> PowerModel<f64> {
        PowerModel::new(&h200(), 45.75, 86.25)
    }

    #[test]
    fn h200_constants() {
        let d = h200();
        assert_eq!(d.base_clock_mhz, 1830);
        assert_eq!(d.boost_clock_mhz, 1980);
        assert_eq!(d.min_clock_mhz, 390);
        assert!((d.ridge_intensity() - 206.0416).abs() < 1e-3);
        d.validate().unwrap();
    }

    #[test]
    fn lock_requests_clamp_to_driver_ceiling_and_floor() {
        let d = h200();
        let p = gqa_decode_power();
        let cases = [
            (1980u32, 1830u32), // above base settles at base
            (1830, 1830),
            (1700, 1700), // between 1590 and base: honoured
            (1590, 1590),
            (1185, 1185),
            (390, 390),
            (200, 390), // below minimum clamps up
        ];
        for (req, want) in cases {
            let s = resolve_lever(&d, ControlLever::LockMhz { mhz: req }, &p, 1.0);
            assert_eq!(s.actual_clock_mhz, want, "lock {req}");
            assert!(!s.cap_limited);
        }
    }

    #[test]
    fn free_run_boosts() {
        let d = h200();
        let s = resolve_lever(&d, ControlLever::FreeRun, &gqa_decode_power(), 1.0);
        assert_eq!(s.actual_clock_mhz, 1980);
    }

    #[test]
    fn power_model_matches_fixture_points() {
        let p = gqa_decode_power();
        assert!((p.power_w(1830, 1.0) - 207.0).abs() < 1e-9);
        assert!((p.power_w(366, 1.0) - 138.0).abs() < 1e-9);
    }

    #[test]
    fn inert_cap_keeps_base_clock() {
        let d = h200();
        let p = gqa_decode_power();
        // Batch-32 utilization scale for a 0.40 batch power coefficient.
        let u = 1.0 + 0.40 * (1.0 - 1.0 / 32.0);
        let draw = p.power_w(1830, u);
        assert!(draw < 280.0, "draw {draw} should sit below the 280 W cap");
        let s = resolve_lever(&d, ControlLever::CapW { watts: 280.0 }, &p, u);
        assert_eq!(s.actual_clock_mhz, 1830);
        assert!(!s.cap_limited);
        assert!(!s.cap_unsatisfiable);
    }

    #[test]
    fn binding_cap_scales_clock_down() {
        let d = h200();
        let p = gqa_decode_power();
        let u = 1.0 + 0.40 * (1.0 - 1.0 / 32.0);
        let s = resolve_lever(&d, ControlLever::CapW { watts: 200.0 }, &p, u);
        assert!(s.cap_limited);
        assert!(!s.cap_unsatisfiable);
        // Resolved clock must satisfy the cap (within 1 MHz rounding).
        let resolved = p.power_w(s.actual_clock_mhz, u);
        assert!((resolved - 200.0).abs() < 0.2);
        assert!(s.actual_clock_mhz < 1830 && s.actual_clock_mhz > 390);
    }

    #[test]
    fn impossible_cap_is_flagged_unsatisfiable() {
        let d = h200();
        let p = gqa_decode_power();
        let s = resolve_lever(&d, ControlLever::CapW { watts: 80.0 }, &p, 1.0);
        assert!(s.cap_unsatisfiable);
        assert_eq!(s.actual_clock_mhz, 390);
    }

    #[test]
    fn lever_labels_are_stable() {
        assert_eq!(ControlLever::<f64>::FreeRun.label(), "free_run");
        assert_eq!(
            ControlLever::<f64>::LockMhz { mhz: 1185 }.label(),
            "lock_1185"
        );
        assert_eq!(ControlLever::CapW { watts: 280.0 }.label(), "cap_280");
    }

    #[test]
    fn toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("device.toml");
        let d = h200();
        d.save_toml(&path).unwrap();
        let back: DeviceSpec<f64> = DeviceSpec::load_toml(&path).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut d = h200();
        d.min_clock_mhz = 2000;
        assert!(matches!(d.validate(), Err(DeviceError::Invalid(_))));
    }
}
