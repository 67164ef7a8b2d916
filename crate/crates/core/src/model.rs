//! The dyad model: two inertia-damper robots joined per axis by a virtual
//! spring whose partner term arrives late by a constant delay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Complex number used for frequency-domain quantities.
pub type ComplexValue = num_complex::Complex64;

/// Inertia and viscous damping of one robot along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAxisDynamics", into = "RawAxisDynamics")]
pub struct AxisDynamics {
    mass: f64,
    damping: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxisDynamics {
    mass: f64,
    damping: f64,
}

impl TryFrom<RawAxisDynamics> for AxisDynamics {
    type Error = Error;
    fn try_from(raw: RawAxisDynamics) -> Result<Self> {
        AxisDynamics::new(raw.mass, raw.damping)
    }
}

impl From<AxisDynamics> for RawAxisDynamics {
    fn from(d: AxisDynamics) -> Self {
        RawAxisDynamics {
            mass: d.mass,
            damping: d.damping,
        }
    }
}

impl AxisDynamics {
    /// Both parameters must be finite and strictly positive. Zero damping is
    /// rejected: such a robot has no delay-independent region at all.
    pub fn new(mass: f64, damping: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(invalid(
                "mass",
                format!("must be finite and > 0, got {mass}"),
            ));
        }
        if !(damping.is_finite() && damping > 0.0) {
            return Err(invalid(
                "damping",
                format!("must be finite and > 0, got {damping}"),
            ));
        }
        Ok(Self { mass, damping })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// `m s^2 + b s + k` evaluated at complex `s`.
    pub(crate) fn impedance(&self, s: ComplexValue, stiffness: f64) -> ComplexValue {
        s * s * self.mass + s * self.damping + stiffness
    }
}

/// Dynamics of both robots along a single axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPair {
    pub robot1: AxisDynamics,
    pub robot2: AxisDynamics,
}

impl AxisPair {
    pub fn new(robot1: AxisDynamics, robot2: AxisDynamics) -> Self {
        Self { robot1, robot2 }
    }

    pub fn identical(d: AxisDynamics) -> Self {
        Self {
            robot1: d,
            robot2: d,
        }
    }
}

/// Full dyad description. Axes are keyed by label and kept in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCouplingConfig", into = "RawCouplingConfig")]
pub struct CouplingConfig {
    axes: BTreeMap<String, AxisPair>,
    stiffness: f64,
    delay: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCouplingConfig {
    robot1: BTreeMap<String, AxisDynamics>,
    robot2: BTreeMap<String, AxisDynamics>,
    /// N/m
    stiffness: f64,
    /// seconds
    delay: f64,
}

impl TryFrom<RawCouplingConfig> for CouplingConfig {
    type Error = Error;
    fn try_from(raw: RawCouplingConfig) -> Result<Self> {
        CouplingConfig::from_robots(raw.robot1, raw.robot2, raw.stiffness, raw.delay)
    }
}

impl From<CouplingConfig> for RawCouplingConfig {
    fn from(c: CouplingConfig) -> Self {
        RawCouplingConfig {
            robot1: c.axes.iter().map(|(a, p)| (a.clone(), p.robot1)).collect(),
            robot2: c.axes.iter().map(|(a, p)| (a.clone(), p.robot2)).collect(),
            stiffness: c.stiffness,
            delay: c.delay,
        }
    }
}

pub(crate) fn check_stiffness(stiffness: f64) -> Result<()> {
    if stiffness.is_finite() && stiffness > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "stiffness",
            format!("must be finite and > 0, got {stiffness}"),
        ))
    }
}

pub(crate) fn check_delay(delay: f64) -> Result<()> {
    if delay.is_finite() && delay >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "delay",
            format!("must be finite and >= 0, got {delay}"),
        ))
    }
}

impl CouplingConfig {
    pub fn new(
        axes: impl IntoIterator<Item = (String, AxisPair)>,
        stiffness: f64,
        delay: f64,
    ) -> Result<Self> {
        let axes: BTreeMap<_, _> = axes.into_iter().collect();
        if axes.is_empty() {
            return Err(invalid("axes", "at least one axis is required"));
        }
        check_stiffness(stiffness)?;
        check_delay(delay)?;
        Ok(Self {
            axes,
            stiffness,
            delay,
        })
    }

    /// Builds a config from per-robot axis maps, which must share the same
    /// axis labels.
    pub fn from_robots(
        robot1: BTreeMap<String, AxisDynamics>,
        robot2: BTreeMap<String, AxisDynamics>,
        stiffness: f64,
        delay: f64,
    ) -> Result<Self> {
        if !robot1.keys().eq(robot2.keys()) {
            return Err(Error::AxisMismatch {
                robot1: robot1.keys().cloned().collect(),
                robot2: robot2.keys().cloned().collect(),
            });
        }
        let axes = robot1
            .into_iter()
            .zip(robot2.into_values())
            .map(|((axis, d1), d2)| (axis, AxisPair::new(d1, d2)));
        Self::new(axes, stiffness, delay)
    }

    /// Single-axis dyad labelled `x`.
    pub fn single_axis(pair: AxisPair, stiffness: f64, delay: f64) -> Result<Self> {
        Self::new([("x".to_string(), pair)], stiffness, delay)
    }

    pub fn axes(&self) -> impl Iterator<Item = (&str, &AxisPair)> {
        self.axes.iter().map(|(a, p)| (a.as_str(), p))
    }

    pub fn axis_labels(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(String::as_str)
    }

    pub fn axis_count(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, label: &str) -> Result<&AxisPair> {
        self.axes
            .get(label)
            .ok_or_else(|| Error::UnknownAxis(label.to_string()))
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn with_stiffness(&self, stiffness: f64) -> Result<Self> {
        check_stiffness(stiffness)?;
        Ok(Self {
            stiffness,
            ..self.clone()
        })
    }

    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        check_delay(delay)?;
        Ok(Self {
            delay,
            ..self.clone()
        })
    }

    /// Per-axis estimates of both robots as identified on the rehabilitation
    /// platform, with the given coupling.
    pub fn rehab_dyad(stiffness: f64, delay: f64) -> Result<Self> {
        let x = AxisPair::new(
            AxisDynamics::new(0.8334, 7.7257)?,
            AxisDynamics::new(0.7776, 7.4208)?,
        );
        let y = AxisPair::new(
            AxisDynamics::new(1.0649, 10.1168)?,
            AxisDynamics::new(1.3407, 9.3496)?,
        );
        Self::new(
            [("x".to_string(), x), ("y".to_string(), y)],
            stiffness,
            delay,
        )
    }
}

/// Base single-DOF dynamics (`M`, `B`) used for the one-axis analyses.
pub fn base_dynamics() -> AxisDynamics {
    AxisDynamics::new(0.8334, 7.7257).expect("constant is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(AxisDynamics::new(0.0, 1.0).is_err());
        assert!(AxisDynamics::new(1.0, 0.0).is_err());
        assert!(AxisDynamics::new(1.0, -2.0).is_err());
        assert!(AxisDynamics::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn config_rejects_bad_coupling() {
        let pair = AxisPair::identical(base_dynamics());
        assert!(CouplingConfig::single_axis(pair, 0.0, 0.0).is_err());
        assert!(CouplingConfig::single_axis(pair, -5.0, 0.0).is_err());
        assert!(CouplingConfig::single_axis(pair, 5.0, -0.1).is_err());
        assert!(CouplingConfig::new(Vec::new(), 5.0, 0.0).is_err());
    }

    #[test]
    fn mismatched_axes_rejected() {
        let d = base_dynamics();
        let r1: BTreeMap<_, _> = [("x".to_string(), d), ("y".to_string(), d)].into();
        let r2: BTreeMap<_, _> = [("x".to_string(), d)].into();
        assert!(matches!(
            CouplingConfig::from_robots(r1, r2, 10.0, 0.1),
            Err(Error::AxisMismatch { .. })
        ));
    }

    #[test]
    fn json_form_round_trips_and_validates() {
        let cfg = CouplingConfig::rehab_dyad(36.0, 0.084).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: CouplingConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);

        let bad = text.replace("7.7257", "0.0");
        assert!(serde_json::from_str::<CouplingConfig>(&bad).is_err());
        let unknown = text.replacen("{", "{\"extra\":1,", 1);
        assert!(serde_json::from_str::<CouplingConfig>(&unknown).is_err());
    }
}
