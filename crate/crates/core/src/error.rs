use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("robot axis sets differ: robot1 has {robot1:?}, robot2 has {robot2:?}")]
    AxisMismatch {
        robot1: Vec<String>,
        robot2: Vec<String>,
    },

    #[error("unknown axis `{0}`")]
    UnknownAxis(String),

    /// k exceeded the critical stiffness but the crossing polynomial had no
    /// positive root, which means the root finder lost precision.
    #[error(
        "no positive crossing root found for k = {stiffness} N/m although k > k_m = {critical} N/m"
    )]
    MissingCrossing { stiffness: f64, critical: f64 },

    #[error(
        "frequency grid refinement exceeded {max_points} points in ({omega_lo}, {omega_hi}) rad/s"
    )]
    UnresolvedContour {
        omega_lo: f64,
        omega_hi: f64,
        max_points: usize,
    },

    #[error("series too short: need {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("regressor matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("experiment grid has no unconnected baseline condition")]
    MissingBaseline,

    #[error("empty sample")]
    EmptySample,

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
