use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Figure-eight target `[A sin(2 w t), B sin(w t)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// m
    pub amp_x: f64,
    /// m
    pub amp_y: f64,
    /// rad/s
    pub omega: f64,
}

impl TargetSpec {
    pub fn new(amp_x: f64, amp_y: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("amp_x", amp_x), ("amp_y", amp_y), ("omega", omega)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(Self {
            amp_x,
            amp_y,
            omega,
        })
    }

    /// Period of the full figure eight, `2 pi / w`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            amp_x: 0.05,
            amp_y: 0.1,
            omega: 2.59,
        }
    }
}

pub fn nominal_target(spec: &TargetSpec, t: f64) -> [f64; 2] {
    [
        spec.amp_x * (2.0 * spec.omega * t).sin(),
        spec.amp_y * (spec.omega * t).sin(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_and_quarter_period() {
        let s = TargetSpec::default();
        assert_eq!(nominal_target(&s, 0.0), [0.0, 0.0]);
        let p = nominal_target(&s, std::f64::consts::PI / (2.0 * s.omega));
        assert!(p[0].abs() < 1e-15);
        assert!((p[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn periodic() {
        let s = TargetSpec::default();
        assert!((s.period() - 2.426).abs() < 1e-3);
        for i in 0..50 {
            let t = i as f64 * 0.137;
            let (a, b) = (nominal_target(&s, t), nominal_target(&s, t + s.period()));
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TargetSpec::new(0.0, 0.1, 1.0).is_err());
        assert!(TargetSpec::new(0.1, 0.1, -1.0).is_err());
    }
}
