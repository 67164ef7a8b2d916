use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_COUPLING_STIFFNESS: f64 = 120.0;
pub const DEFAULT_SPOT_COUNT: usize = 10;
/// m/s
pub const DEFAULT_SPOT_VELOCITY_STD: f64 = 0.3;
/// Radius of the disc that bounds every spot offset, m.
pub const MAX_SPOT_OFFSET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Pulled toward the nominal target.
    Skilled,
    /// Pulled toward a cloud of randomly moving spots around the target.
    Blurred,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// k_c, N/m
    pub coupling_stiffness: f64,
    pub spot_count: usize,
    /// m/s
    pub spot_velocity_std: f64,
}

impl AgentSpec {
    pub fn skilled(coupling_stiffness: f64) -> Result<Self> {
        Self {
            kind: AgentKind::Skilled,
            coupling_stiffness,
            spot_count: 0,
            spot_velocity_std: 0.0,
        }
        .validated()
    }

    pub fn blurred(
        coupling_stiffness: f64,
        spot_count: usize,
        spot_velocity_std: f64,
    ) -> Result<Self> {
        Self {
            kind: AgentKind::Blurred,
            coupling_stiffness,
            spot_count,
            spot_velocity_std,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.coupling_stiffness.is_finite() && self.coupling_stiffness > 0.0) {
            return Err(invalid(
                "coupling_stiffness",
                format!("must be > 0, got {}", self.coupling_stiffness),
            ));
        }
        if self.kind == AgentKind::Blurred {
            if self.spot_count == 0 {
                return Err(invalid(
                    "spot_count",
                    "a blurred agent needs at least one spot",
                ));
            }
            if !(self.spot_velocity_std.is_finite() && self.spot_velocity_std >= 0.0) {
                return Err(invalid(
                    "spot_velocity_std",
                    format!("must be >= 0, got {}", self.spot_velocity_std),
                ));
            }
        }
        Ok(self)
    }
}

/// Spot offsets relative to the nominal target. Every tick each spot draws a
/// fresh velocity from `N(0, sigma^2)` per component, moves by `v dt` and is
/// pulled back onto the disc of radius [`MAX_SPOT_OFFSET`] if it leaves it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotCloud {
    offsets: Vec<[f64; 2]>,
    velocities: Vec<[f64; 2]>,
}

impl SpotCloud {
    pub fn new(count: usize) -> Self {
        Self {
            offsets: vec![[0.0; 2]; count],
            velocities: vec![[0.0; 2]; count],
        }
    }

    pub fn offsets(&self) -> &[[f64; 2]] {
        &self.offsets
    }

    /// Velocities drawn on the most recent tick.
    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.velocities
    }

    pub fn mean_velocity(&self) -> [f64; 2] {
        mean(&self.velocities)
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, sigma: f64, rng: &mut R, dt: f64) {
        // sigma = 0 gives exact zeros without consuming randomness
        let normal = Normal::new(0.0, sigma).ok().filter(|_| sigma > 0.0);
        for (off, vel) in self.offsets.iter_mut().zip(self.velocities.iter_mut()) {
            *vel = match &normal {
                Some(n) => [n.sample(rng), n.sample(rng)],
                None => [0.0, 0.0],
            };
            off[0] += vel[0] * dt;
            off[1] += vel[1] * dt;
            let r = off[0].hypot(off[1]);
            if r > MAX_SPOT_OFFSET {
                off[0] *= MAX_SPOT_OFFSET / r;
                off[1] *= MAX_SPOT_OFFSET / r;
            }
        }
    }

    /// Absolute spot positions around `target`.
    pub fn positions(&self, target: [f64; 2]) -> Vec<[f64; 2]> {
        self.offsets
            .iter()
            .map(|o| [target[0] + o[0], target[1] + o[1]])
            .collect()
    }
}

/// Advances the cloud by one tick and returns the spot positions around
/// `target`.
pub fn blurred_targets<R: Rng + ?Sized>(
    spec: &AgentSpec,
    cloud: &mut SpotCloud,
    target: [f64; 2],
    rng: &mut R,
    dt: f64,
) -> Result<Vec<[f64; 2]>> {
    if spec.kind != AgentKind::Blurred {
        return Err(invalid("kind", "spot cloud requested for a skilled agent"));
    }
    cloud.advance(spec.spot_velocity_std, rng, dt);
    Ok(cloud.positions(target))
}

fn mean(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len().max(1) as f64;
    let s = points
        .iter()
        .fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Skilled: `k_c (p* - p)`. Blurred: `sum_i (k_c / N)(p*_i - p)`.
pub fn agent_force(
    spec: &AgentSpec,
    nominal: [f64; 2],
    spots: Option<&[[f64; 2]]>,
    current: [f64; 2],
) -> Result<[f64; 2]> {
    let kc = spec.coupling_stiffness;
    match (spec.kind, spots) {
        (AgentKind::Skilled, None) => Ok([
            kc * (nominal[0] - current[0]),
            kc * (nominal[1] - current[1]),
        ]),
        (AgentKind::Blurred, Some(spots)) if !spots.is_empty() => {
            let w = kc / spots.len() as f64;
            Ok(spots.iter().fold([0.0, 0.0], |acc, s| {
                [
                    acc[0] + w * (s[0] - current[0]),
                    acc[1] + w * (s[1] - current[1]),
                ]
            }))
        }
        (AgentKind::Skilled, Some(_)) => Err(invalid("spots", "a skilled agent takes no spots")),
        (AgentKind::Blurred, _) => {
            Err(invalid("spots", "a blurred agent needs its spot positions"))
        }
    }
}
