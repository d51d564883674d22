//! wattsweep: phase-aware GPU energy characterization and clock-policy
//! synthesis for LLM inference serving.
//!
//! The library sweeps SM clock locks and power caps across architecture,
//! batch-size, and context-length grids, measures per-phase energy from power
//! telemetry, and derives clock policies from the resulting Pareto structure.
//! A calibrated analytical device simulator backs desk-scale verification;
//! the same orchestration drives real hardware through the backend trait.
//!
//! Numeric kernels are generic over the scalar type via [`num::Real`]
//! (`f32` or `f64`). The concrete aliases below fix the default `f64`
//! pipeline used by the CLI and the exchange formats.

pub mod analysis;
pub mod backend;
pub mod calibration;
pub mod config;
pub mod device;
pub mod num;
pub mod orchestrator;
pub mod policy;
pub mod stats;
pub mod telemetry;
pub mod workload;

/// Scalar type used by the default pipeline and all exchange formats.
pub type Scalar = f64;

pub type DeviceSpec = device::DeviceSpec<Scalar>;
pub type ControlLever = device::ControlLever<Scalar>;
pub type DvfsState = device::DvfsState<Scalar>;
pub type PowerModel = device::PowerModel<Scalar>;
pub type ArchitectureProfile = workload::ArchitectureProfile<Scalar>;
pub type ProfileSet = workload::ProfileSet<Scalar>;
pub type WorkloadRequest = backend::WorkloadRequest<Scalar>;
pub type RunRecord = backend::RunRecord<Scalar>;
pub type SimBackend = backend::sim::SimBackend<Scalar>;
pub type SweepGrid = orchestrator::SweepGrid<Scalar>;
pub type CellSummary = orchestrator::CellSummary<Scalar>;
pub type SweepTable = analysis::SweepTable<Scalar>;
pub type ParetoPoint = analysis::pareto::ParetoPoint<Scalar>;
pub type PolicyTable = policy::PolicyTable<Scalar>;
pub type AppConfig = config::AppConfig<Scalar>;
pub type PowerSample = telemetry::PowerSample<Scalar>;
pub type PowerTrace = telemetry::PowerTrace<Scalar>;
pub type TraceBuilder = telemetry::TraceBuilder<Scalar>;
pub type PhaseWindow = telemetry::PhaseWindow<Scalar>;
pub type EnergyMeasurement = telemetry::EnergyMeasurement<Scalar>;

/// Version stamped into run records and report manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Schema version for persisted run records.
pub const RECORD_SCHEMA_VERSION: u32 = 1;
