//! Stability analysis and simulation of two robots coupled by a delayed
//! virtual spring.
//!
//! Each axis of the dyad obeys
//! `m_i x_i'' + b_i x_i' = k (x_j(t - delay) - x_i) + f_i`. The crate provides
//! analytic stability criteria ([`criteria`]), frequency-domain checks
//! ([`freq`]), a delay-differential-equation integrator ([`dde`]), mass and
//! damping identification ([`sysident`]) and a simulated tracking experiment
//! ([`experiment`]).

pub mod criteria;
pub mod cubic;
pub mod dde;
pub mod error;
pub mod experiment;
pub mod freq;
pub mod model;
pub mod sysident;

pub use criteria::{
    classify, critical_stiffness, max_tolerable_delay, max_tolerable_delay_identical,
    reference_coupling, Crossing, ReferenceCoupling, StabilityKind, StabilityReport,
    StabilityVerdict,
};
pub use cubic::CubicCoefficients;
pub use dde::{
    classify_response, integrate, ResponseClass, SimulationSettings, Simulator, StepResponse,
};
pub use error::{Error, Result};
pub use freq::{nyquist_encirclements, open_loop_response, FrequencyGrid, NyquistResult};
pub use model::{AxisDynamics, AxisPair, ComplexValue, CouplingConfig};
pub use sysident::{
    estimate_ols, estimate_wls, ExcitationProfile, IdentificationResult, TrajectoryRecord,
};
