//! Simulation and analysis toolkit for a closed two-tier queueing network.
//!
//! The network circulates a fixed population of units between `r`
//! infinite-server stations (exponential per-unit holding times, routed by
//! a stochastic matrix) and `k` autonomously served single-server client
//! stations, exactly one of which — the last — is a bottleneck. The crate
//! provides:
//!
//! - [`model`]: parameter validation, derived quantities, topology
//!   classification;
//! - [`point_process`]: the stationary departure-epoch streams;
//! - [`reflection`]: the normal reflection map at zero for step paths;
//! - [`fluid`]: closed-form fluid limits, time-dependent loads and a
//!   numeric oracle;
//! - [`sim`]: the exact event-driven simulator;
//! - [`stats`]: distribution estimators and limit-law checks over
//!   replications.

pub mod fluid;
pub mod model;
pub mod point_process;
pub mod reflection;
pub mod seeds;
pub mod sim;
pub mod stats;

pub use fluid::{fluid_curves, int_q, linspace, occupancy_curves, q_of_t, rho_j_of_t, solve_fluid_numeric, FluidCurves};
pub use model::{classify, derive_params, normalize_order, validate_spec, BetaConvention, ClientRegime, DerivedParams, NetworkSpec, TopologyReport, Violation, ViolationCode};
pub use point_process::{empirical_rate, last_before, make_stream, EpochStream, PointProcessKind, PointProcessSpec};
pub use reflection::{phi, psi, reflect, StepPath};
pub use sim::{crossing_identity_violation, replicate, replicate_serial, run_replication, Discipline, EngineMode, SimConfig, Trajectory};
pub use stats::{geometric_pmf, mean_stderr, pmf_at, predeparture_pmf_at, theorem1_integrals, time_invariance_check, tv_distance, DistEstimate, IntegralEstimate, TimeInvarianceReport};
