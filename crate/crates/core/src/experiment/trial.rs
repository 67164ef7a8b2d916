use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{agent_force, blurred_targets, AgentKind, AgentSpec, SpotCloud};
use super::agent::{DEFAULT_COUPLING_STIFFNESS, DEFAULT_SPOT_COUNT, DEFAULT_SPOT_VELOCITY_STD};
use super::target::{nominal_target, TargetSpec};
use crate::dde::{default_dt, Simulator};
use crate::error::{invalid, Error, Result};
use crate::model::CouplingConfig;

pub const DEFAULT_PERIODS: usize = 8;
pub const DEFAULT_DISCARD_PERIODS: usize = 1;
/// Hz
pub const DEFAULT_CONTROL_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// No virtual spring between the robots.
    Unconnected,
    Connected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCondition {
    pub mode: ExperimentMode,
    /// N/m; ignored when unconnected
    pub stiffness: f64,
    /// s
    pub delay: f64,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentCondition {
    pub fn unconnected(trials: usize, seed: u64) -> Result<Self> {
        Self {
            mode: ExperimentMode::Unconnected,
            stiffness: 0.0,
            delay: 0.0,
            trials,
            seed,
        }
        .validated()
    }

    pub fn connected(stiffness: f64, delay: f64, trials: usize, seed: u64) -> Result<Self> {
        Self {
            mode: ExperimentMode::Connected,
            stiffness,
            delay,
            trials,
            seed,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be >= 1"));
        }
        if self.mode == ExperimentMode::Connected
            && !(self.stiffness.is_finite() && self.stiffness > 0.0)
        {
            return Err(invalid(
                "stiffness",
                format!("must be > 0 when connected, got {}", self.stiffness),
            ));
        }
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(invalid(
                "delay",
                format!("must be >= 0, got {}", self.delay),
            ));
        }
        Ok(self)
    }

    /// Effective spring stiffness, zero when unconnected.
    pub fn spring(&self) -> f64 {
        match self.mode {
            ExperimentMode::Unconnected => 0.0,
            ExperimentMode::Connected => self.stiffness,
        }
    }

    /// `UM` or `CM-<k>-<delay ms>`.
    pub fn label(&self) -> String {
        match self.mode {
            ExperimentMode::Unconnected => "UM".into(),
            ExperimentMode::Connected => format!(
                "CM-{}-{}",
                fmt_trim(self.stiffness),
                fmt_trim(self.delay * 1e3)
            ),
        }
    }
}

fn fmt_trim(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

/// Everything about a trial except the coupling condition and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSettings {
    pub target: TargetSpec,
    pub agent1: AgentSpec,
    pub agent2: AgentSpec,
    /// Trial length in target periods.
    pub periods: usize,
    /// Leading periods excluded from the tracking error.
    pub discard_periods: usize,
    /// Rate of agent force and spot updates, Hz.
    pub control_rate: f64,
    /// Integrator step; `None` uses the delay-dependent default.
    pub dt: Option<f64>,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            target: TargetSpec::default(),
            agent1: AgentSpec::skilled(DEFAULT_COUPLING_STIFFNESS).expect("valid default"),
            agent2: AgentSpec::blurred(
                DEFAULT_COUPLING_STIFFNESS,
                DEFAULT_SPOT_COUNT,
                DEFAULT_SPOT_VELOCITY_STD,
            )
            .expect("valid default"),
            periods: DEFAULT_PERIODS,
            discard_periods: DEFAULT_DISCARD_PERIODS,
            control_rate: DEFAULT_CONTROL_RATE,
            dt: None,
        }
    }
}

impl TrialSettings {
    pub fn validate(&self) -> Result<()> {
        self.agent1.validated()?;
        self.agent2.validated()?;
        if self.periods <= self.discard_periods {
            return Err(invalid(
                "periods",
                format!(
                    "must exceed the {} discarded period(s), got {}",
                    self.discard_periods, self.periods
                ),
            ));
        }
        if !(self.control_rate.is_finite() && self.control_rate > 0.0) {
            return Err(invalid(
                "control_rate",
                format!("must be > 0, got {}", self.control_rate),
            ));
        }
        Ok(())
    }
}

/// Sampled planar paths, one entry per integrator step after the discarded
/// transient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrajectories {
    pub times: Vec<f64>,
    pub target: Vec<[f64; 2]>,
    pub robot1: Vec<[f64; 2]>,
    pub robot2: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    /// m
    pub te1: f64,
    /// m
    pub te2: f64,
    /// Integration stopped early because a position blew up.
    pub diverged: bool,
    pub trajectories: Option<TrialTrajectories>,
}

/// Mean Euclidean distance between aligned samples.
pub fn tracking_error(actual: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
    if actual.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: target.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptySample);
    }
    let sum: f64 = actual
        .iter()
        .zip(target)
        .map(|(a, t)| (a[0] - t[0]).hypot(a[1] - t[1]))
        .sum();
    Ok(sum / actual.len() as f64)
}

struct AgentState {
    spec: AgentSpec,
    cloud: Option<(SpotCloud, ChaCha8Rng)>,
}

impl AgentState {
    // both agents draw from streams seeded identically, so identical agents
    // see identical disturbances
    fn new(spec: AgentSpec, seed: u64) -> Self {
        let cloud = (spec.kind == AgentKind::Blurred).then(|| {
            (
                SpotCloud::new(spec.spot_count),
                ChaCha8Rng::seed_from_u64(seed),
            )
        });
        Self { spec, cloud }
    }

    /// Point the agent currently pulls toward. The force law is linear, so
    /// `agent_force(.., p) = k_c (reference - p)` for every `p`.
    fn reference(&mut self, target: [f64; 2], tick: f64) -> Result<[f64; 2]> {
        let spots = match &mut self.cloud {
            None => None,
            Some((cloud, rng)) => Some(blurred_targets(&self.spec, cloud, target, rng, tick)?),
        };
        let f = agent_force(&self.spec, target, spots.as_deref(), [0.0, 0.0])?;
        let kc = self.spec.coupling_stiffness;
        Ok([f[0] / kc, f[1] / kc])
    }
}

/// Simulates one trial of the tracking task.
///
/// The configuration must have exactly the axes `x` and `y`. Each agent's
/// reference point (the target, or the centroid of its spot cloud) is
/// refreshed at the control rate and held in between; the spring toward it
/// acts continuously on the simulated position.
pub fn run_trial(
    config: &CouplingConfig,
    settings: &TrialSettings,
    condition: &ExperimentCondition,
    seed: u64,
    keep_trajectories: bool,
) -> Result<TrialOutcome> {
    settings.validate()?;
    condition.validated()?;
    let labels: Vec<&str> = config.axis_labels().collect();
    if labels != ["x", "y"] {
        let bad = labels
            .iter()
            .find(|l| **l != "x" && **l != "y")
            .map(|l| l.to_string())
            .unwrap_or_else(|| {
                if labels.contains(&"x") {
                    "y".into()
                } else {
                    "x".into()
                }
            });
        return Err(Error::UnknownAxis(bad));
    }

    let cfg = config.with_delay(condition.delay)?;
    let dt = settings.dt.unwrap_or_else(|| default_dt(condition.delay));
    let (kc1, kc2) = (
        settings.agent1.coupling_stiffness,
        settings.agent2.coupling_stiffness,
    );
    let mut sim =
        Simulator::with_stiffness(&cfg, condition.spring(), dt)?.with_anchors([kc1, kc2])?;
    let dt = sim.dt();

    let period = settings.target.period();
    let steps = (settings.periods as f64 * period / dt).round() as usize;
    let first_kept = (settings.discard_periods as f64 * period / dt).round() as usize;
    let tick = 1.0 / settings.control_rate;

    let mut agent1 = AgentState::new(settings.agent1, seed);
    let mut agent2 = AgentState::new(settings.agent2, seed);
    let mut held = [[0.0f64; 2]; 2]; // k_c * reference, [agent][axis]
    let mut next_tick = 0usize;

    let kept = steps - first_kept;
    let mut traj = TrialTrajectories {
        times: Vec::with_capacity(kept),
        target: Vec::with_capacity(kept),
        robot1: Vec::with_capacity(kept),
        robot2: Vec::with_capacity(kept),
    };
    let position = |sim: &Simulator, robot: usize| {
        [
            sim.axis(0).positions()[robot],
            sim.axis(1).positions()[robot],
        ]
    };

    let mut diverged = false;
    for n in 0..steps {
        let t = sim.time();
        if t >= next_tick as f64 * tick - 1e-9 * dt {
            let target = nominal_target(&settings.target, t);
            let (r1, r2) = (
                agent1.reference(target, tick)?,
                agent2.reference(target, tick)?,
            );
            held = [[kc1 * r1[0], kc1 * r1[1]], [kc2 * r2[0], kc2 * r2[1]]];
            next_tick += 1;
        }
        let forces = held;
        sim.step(|_, axis| [forces[0][axis], forces[1][axis]]);
        if (0..2).any(|i| sim.axis(i).is_diverged()) {
            diverged = true;
        }
        if n + 1 > first_kept {
            let t = sim.time();
            traj.times.push(t);
            traj.target.push(nominal_target(&settings.target, t));
            traj.robot1.push(position(&sim, 0));
            traj.robot2.push(position(&sim, 1));
        }
        if diverged {
            break;
        }
    }

    if traj.times.is_empty() {
        // blew up inside the discarded transient
        return Ok(TrialOutcome {
            seed,
            te1: f64::INFINITY,
            te2: f64::INFINITY,
            diverged,
            trajectories: keep_trajectories.then_some(traj),
        });
    }
    let te1 = tracking_error(&traj.robot1, &traj.target)?;
    let te2 = tracking_error(&traj.robot2, &traj.target)?;
    Ok(TrialOutcome {
        seed,
        te1,
        te2,
        diverged,
        trajectories: keep_trajectories.then_some(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_error_basics() {
        let a = [[0.0, 0.0], [1.0, 2.0]];
        assert_eq!(tracking_error(&a, &a).unwrap(), 0.0);
        let shifted = [[0.003, 0.004], [1.003, 2.004]];
        assert!((tracking_error(&shifted, &a).unwrap() - 0.005).abs() < 1e-15);
        assert!(tracking_error(&a[..1], &a).is_err());
        assert!(tracking_error(&[], &[]).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(
            ExperimentCondition::unconnected(1, 0).unwrap().label(),
            "UM"
        );
        let c = ExperimentCondition::connected(142.0, 0.334, 1, 0).unwrap();
        assert_eq!(c.label(), "CM-142-334");
        assert!(ExperimentCondition::connected(0.0, 0.0, 1, 0).is_err());
        assert!(ExperimentCondition::unconnected(0, 0).is_err());
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = CouplingConfig::rehab_dyad(36.0, 0.0).unwrap();
        let s = TrialSettings {
            periods: 2,
            ..TrialSettings::default()
        };
        let c = ExperimentCondition::connected(36.0, 0.084, 1, 0).unwrap();
        let a = run_trial(&cfg, &s, &c, 11, false).unwrap();
        let b = run_trial(&cfg, &s, &c, 11, false).unwrap();
        assert_eq!(a, b);
        assert!(a.te1 > 0.0 && a.te2 > 0.0 && !a.diverged);
    }

    #[test]
    fn requires_planar_axes() {
        let cfg = CouplingConfig::single_axis(
            crate::model::AxisPair::identical(crate::model::base_dynamics()),
            36.0,
            0.0,
        )
        .unwrap();
        let c = ExperimentCondition::unconnected(1, 0).unwrap();
        assert!(matches!(
            run_trial(&cfg, &TrialSettings::default(), &c, 0, false),
            Err(Error::UnknownAxis(_))
        ));
    }
}
