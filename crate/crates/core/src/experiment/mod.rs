//! Simulated dyadic tracking experiment: a skilled and a disturbed agent
//! each drive one robot along a figure-eight while a delayed virtual spring
//! couples the robots.

mod agent;
mod protocol;
mod stats;
mod target;
mod trial;

pub use agent::{
    agent_force, blurred_targets, AgentKind, AgentSpec, SpotCloud, DEFAULT_COUPLING_STIFFNESS,
    DEFAULT_SPOT_COUNT, DEFAULT_SPOT_VELOCITY_STD, MAX_SPOT_OFFSET,
};
pub use protocol::{
    compare, custom_grid, derive_seed, reference_grid, run_protocol, standard_grid, Comparison,
    ConditionRow, ExperimentOutcome, Mark, ProtocolReport, DEFAULT_TRIALS, SIGNIFICANCE_LEVEL,
    STANDARD_DELAYS, STANDARD_STIFFNESSES,
};
pub use stats::{rank_sum_test, RankSumResult, EXACT_MAX_MIN_N, EXACT_MAX_TOTAL_N};
pub use target::{nominal_target, TargetSpec};
pub use trial::{
    run_trial, tracking_error, ExperimentCondition, ExperimentMode, TrialOutcome, TrialSettings,
    TrialTrajectories, DEFAULT_CONTROL_RATE, DEFAULT_DISCARD_PERIODS, DEFAULT_PERIODS,
};
