//! Delay-independent and delay-dependent stability criteria.
//!
//! Per axis the dyad obeys
//!
//! ```text
//! m1 x1'' + b1 x1' = k (x2(t - d) - x1(t)) + f1
//! m2 x2'' + b2 x2' = k (x1(t - d) - x2(t)) + f2
//! ```
//!
//! whose characteristic function is `(m1 s^2 + b1 s + k)(m2 s^2 + b2 s + k) - k^2 e^{-2 d s}`.
//! Substituting `z = e^{-d s}` turns it into a polynomial in `(s, z)`;
//! imaginary-axis crossings happen at `s = j w` with `|z| = 1`, which reduces
//! to a cubic in `xi = w^2`. The delay at each crossing follows from
//! `arg z(w)`.

use serde::{Deserialize, Serialize};

use crate::cubic::CubicCoefficients;
use crate::error::{invalid, Error, Result};
use crate::model::{check_stiffness, AxisDynamics, AxisPair, ComplexValue, CouplingConfig};

/// Largest stiffness for which the coupled pair is stable for every delay:
/// `(b1^2 + b2^2) / (2 (m1 + m2))`.
pub fn critical_stiffness(d1: &AxisDynamics, d2: &AxisDynamics) -> f64 {
    let (b1, b2) = (d1.damping(), d2.damping());
    (b1 * b1 + b2 * b2) / (2.0 * (d1.mass() + d2.mass()))
}

/// Coefficients of the crossing polynomial `F(xi)`, `xi = w^2`. Its positive
/// roots are exactly the frequencies where `|z(w)| = 1`.
pub fn f_xi_coefficients(d1: &AxisDynamics, d2: &AxisDynamics, k: f64) -> CubicCoefficients {
    let (m1, b1, m2, b2) = (d1.mass(), d1.damping(), d2.mass(), d2.damping());
    let g1 = b1 * b1 - 2.0 * k * m1;
    let g2 = b2 * b2 - 2.0 * k * m2;
    CubicCoefficients::new(
        m1 * m1 * m2 * m2,
        g1 * m2 * m2 + g2 * m1 * m1,
        g1 * g2 + k * k * (m1 * m1 + m2 * m2),
        k * k * (g1 + g2),
    )
}

/// Positive real roots of the crossing polynomial, ascending.
pub fn positive_real_roots(coefficients: &CubicCoefficients) -> Vec<f64> {
    coefficients.positive_real_roots()
}

/// The bivariate characteristic polynomial `a(s, z)`.
pub fn characteristic(
    d1: &AxisDynamics,
    d2: &AxisDynamics,
    k: f64,
    s: ComplexValue,
    z: ComplexValue,
) -> ComplexValue {
    d1.impedance(s, k) * d2.impedance(s, k) - z * z * (k * k)
}

/// Root `z` of `a(j w, z) = 0` on the branch with non-positive imaginary part.
pub fn z_of_omega(d1: &AxisDynamics, d2: &AxisDynamics, k: f64, omega: f64) -> ComplexValue {
    let (m1, b1, m2, b2) = (d1.mass(), d1.damping(), d2.mass(), d2.damping());
    let w2 = omega * omega;
    let a1 = ComplexValue::new(m1 * w2 - k, -b1 * omega);
    let a2 = ComplexValue::new(m2 * w2 - k, -b2 * omega);
    let root = (a1 * a2).sqrt() / k;
    let selector = w2 - k * (b1 + b2) / (m1 * b2 + m2 * b1);

    let z = if selector > 0.0 {
        root
    } else if selector < 0.0 {
        -root
    } else {
        // A1 A2 is real here; keep whichever root yields the smaller
        // non-negative delay
        let (p, n) = (root, -root);
        if p.im < 0.0 {
            p
        } else if n.im < 0.0 {
            n
        } else if p.re >= 0.0 {
            p
        } else {
            n
        }
    };
    // a zero imaginary part is stored as -0.0 so that atan2 stays in [-pi, 0]
    if z.im == 0.0 {
        ComplexValue::new(z.re, -0.0)
    } else {
        z
    }
}

/// Delay at which `e^{-j w d}` equals `z`: `-arg(z) / w` with the principal
/// argument.
pub fn delay_from_z(z: ComplexValue, omega: f64) -> f64 {
    let mut arg = z.im.atan2(z.re);
    if arg > 0.0 {
        // only reachable for a negative real z carrying +0.0
        arg = -std::f64::consts::PI;
    }
    -arg / omega
}

/// A delay together with the frequency at which the roots cross.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// seconds
    pub delay: f64,
    /// rad/s
    pub omega: f64,
}

/// Smallest delay at which a characteristic root reaches the imaginary axis,
/// or `None` when no delay can destabilise the pair.
///
/// Every `k` above the critical stiffness has a crossing. Below it, nearly
/// matched robots never cross, but strongly mismatched ones (for example a
/// heavy, lightly damped robot against a light, heavily damped one) can
/// still have crossings, so the crossing polynomial decides in both cases.
pub fn max_tolerable_delay(
    d1: &AxisDynamics,
    d2: &AxisDynamics,
    k: f64,
) -> Result<Option<Crossing>> {
    check_stiffness(k)?;
    let critical = critical_stiffness(d1, d2);
    let mut poly = f_xi_coefficients(d1, d2, k);
    if k <= critical {
        // c0 = k^2 (g1 + g2) is exactly non-negative here; keep rounding from
        // inventing a spurious root next to xi = 0
        poly.c0 = poly.c0.max(0.0);
    }
    let crossing = positive_real_roots(&poly)
        .into_iter()
        .map(|xi| {
            let omega = xi.sqrt();
            Crossing {
                delay: delay_from_z(z_of_omega(d1, d2, k, omega), omega),
                omega,
            }
        })
        .min_by(|a, b| a.delay.total_cmp(&b.delay));
    if crossing.is_none() && k > critical {
        return Err(Error::MissingCrossing {
            stiffness: k,
            critical,
        });
    }
    Ok(crossing)
}

/// Closed form of [`max_tolerable_delay`] for two identical robots.
pub fn max_tolerable_delay_identical(d: &AxisDynamics, k: f64) -> Result<Option<Crossing>> {
    check_stiffness(k)?;
    if k <= critical_stiffness(d, d) {
        return Ok(None);
    }
    let (m, b) = (d.mass(), d.damping());
    let eta = 2.0 * m * k - b * b;
    let root = eta.sqrt();
    let mk = m * k;
    let arg = (-b * root / mk).atan2((mk - b * b) / mk);
    Ok(Some(Crossing {
        delay: -m / root * arg,
        omega: root / m,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StabilityKind {
    DelayIndependent,
    DelayDependent,
    Unstable,
}

impl StabilityKind {
    pub fn is_stable(self) -> bool {
        self != StabilityKind::Unstable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StabilityKind::DelayIndependent => "delay-independent",
            StabilityKind::DelayDependent => "delay-dependent",
            StabilityKind::Unstable => "unstable",
        }
    }
}

impl std::fmt::Display for StabilityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub kind: StabilityKind,
    /// N/m
    pub critical_stiffness: f64,
    /// seconds; present iff `kind != DelayIndependent`
    pub max_delay: Option<f64>,
    /// rad/s
    pub crossing_frequency: Option<f64>,
}

/// Verdict for one axis at stiffness `k` and delay `delay`.
///
/// The boundary cases are closed: `k == k_m` is delay-independent and
/// `delay == delta_m` is still stable.
pub fn axis_verdict(pair: &AxisPair, k: f64, delay: f64) -> Result<StabilityVerdict> {
    let critical_stiffness = critical_stiffness(&pair.robot1, &pair.robot2);
    let crossing = max_tolerable_delay(&pair.robot1, &pair.robot2, k)?;
    Ok(match crossing {
        None => StabilityVerdict {
            kind: StabilityKind::DelayIndependent,
            critical_stiffness,
            max_delay: None,
            crossing_frequency: None,
        },
        Some(c) => StabilityVerdict {
            kind: if delay > c.delay {
                StabilityKind::Unstable
            } else {
                StabilityKind::DelayDependent
            },
            critical_stiffness,
            max_delay: Some(c.delay),
            crossing_frequency: Some(c.omega),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisVerdict {
    pub axis: String,
    pub verdict: StabilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// N/m
    pub stiffness: f64,
    /// seconds
    pub delay: f64,
    pub axes: Vec<AxisVerdict>,
    pub aggregate: StabilityVerdict,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.aggregate.kind.is_stable()
    }

    pub fn axis(&self, label: &str) -> Option<&StabilityVerdict> {
        self.axes
            .iter()
            .find(|a| a.axis == label)
            .map(|a| &a.verdict)
    }
}

/// Classifies every axis, then aggregates: critical stiffness and maximum
/// delay are minima over the axes, the kind is the worst one.
pub fn classify(config: &CouplingConfig) -> Result<StabilityReport> {
    let (k, delay) = (config.stiffness(), config.delay());
    let axes = config
        .axes()
        .map(|(label, pair)| {
            axis_verdict(pair, k, delay).map(|verdict| AxisVerdict {
                axis: label.to_string(),
                verdict,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let critical_stiffness = axes
        .iter()
        .map(|a| a.verdict.critical_stiffness)
        .fold(f64::INFINITY, f64::min);
    let binding = axes
        .iter()
        .filter_map(|a| a.verdict.max_delay.zip(a.verdict.crossing_frequency))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let kind = axes
        .iter()
        .map(|a| a.verdict.kind)
        .max()
        .expect("config has at least one axis");

    Ok(StabilityReport {
        stiffness: k,
        delay,
        aggregate: StabilityVerdict {
            kind,
            critical_stiffness,
            max_delay: binding.map(|b| b.0),
            crossing_frequency: binding.map(|b| b.1),
        },
        axes,
    })
}

/// Reference coupling for a configuration: the minimum per-axis critical
/// stiffness `K` and the maximum tolerable delay at `2 K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCoupling {
    pub stiffness: f64,
    pub delay: f64,
}

pub fn reference_coupling(config: &CouplingConfig) -> Result<ReferenceCoupling> {
    let stiffness = config
        .axes()
        .map(|(_, p)| critical_stiffness(&p.robot1, &p.robot2))
        .fold(f64::INFINITY, f64::min);
    let report = classify(&config.with_stiffness(2.0 * stiffness)?)?;
    let delay = report.aggregate.max_delay.ok_or(Error::MissingCrossing {
        stiffness: 2.0 * stiffness,
        critical: stiffness,
    })?;
    Ok(ReferenceCoupling { stiffness, delay })
}

/// Whether moving `k` or `delay` by a relative `band` in either direction can
/// flip the axis between stable and unstable. Cells for which this holds sit
/// on the stability boundary, where simulated verdicts are marginal.
pub fn near_stability_boundary(pair: &AxisPair, k: f64, delay: f64, band: f64) -> Result<bool> {
    if !(band.is_finite() && band >= 0.0) {
        return Err(invalid(
            "band",
            format!("must be finite and >= 0, got {band}"),
        ));
    }
    let stable = axis_verdict(pair, k, delay)?.kind.is_stable();
    for kf in [1.0 - band, 1.0, 1.0 + band] {
        for df in [1.0 - band, 1.0, 1.0 + band] {
            if axis_verdict(pair, k * kf, delay * df)?.kind.is_stable() != stable {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
