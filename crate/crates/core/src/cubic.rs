//! Real roots of cubic polynomials.
//!
//! Candidates come from the closed form (trigonometric when all three roots
//! are real, Cardano otherwise) and are then polished with a few Newton
//! steps on the original coefficients.

use serde::{Deserialize, Serialize};

/// `c3 x^3 + c2 x^2 + c1 x + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

/// Accepted relative residual `|p(x)| / sum |c_i x^i|` for a root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;
/// Roots at or below this value are not considered positive.
pub const MIN_POSITIVE_ROOT: f64 = 1e-12;
const NEWTON_STEPS: usize = 5;

impl CubicCoefficients {
    pub fn new(c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c3, c2, c1, c0 }
    }

    /// Monic cubic with the given roots, scaled by `lead`.
    pub fn from_roots(lead: f64, r: [f64; 3]) -> Self {
        let s1 = r[0] + r[1] + r[2];
        let s2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let s3 = r[0] * r[1] * r[2];
        Self::new(lead, -lead * s1, lead * s2, -lead * s3)
    }

    pub fn eval(&self, x: f64) -> f64 {
        ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (3.0 * self.c3 * x + 2.0 * self.c2) * x + self.c1
    }

    /// Sum of the absolute values of the individual terms at `x`.
    pub fn term_scale(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.c3.abs() * ax * ax * ax + self.c2.abs() * ax * ax + self.c1.abs() * ax + self.c0.abs()
    }

    pub fn relative_residual(&self, x: f64) -> f64 {
        let scale = self.term_scale(x);
        if scale == 0.0 {
            0.0
        } else {
            self.eval(x).abs() / scale
        }
    }

    /// All real roots, ascending, each polished and residual-checked.
    ///
    /// Requires `c3 != 0`.
    pub fn real_roots(&self) -> Vec<f64> {
        let mut roots: Vec<f64> = closed_form_candidates(self)
            .into_iter()
            .map(|x| self.polish(x))
            .filter(|&x| x.is_finite() && self.relative_residual(x) <= ROOT_RESIDUAL_TOL)
            .collect();
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300));
        roots
    }

    /// Real roots strictly greater than [`MIN_POSITIVE_ROOT`], ascending.
    pub fn positive_real_roots(&self) -> Vec<f64> {
        self.real_roots()
            .into_iter()
            .filter(|&x| x > MIN_POSITIVE_ROOT)
            .collect()
    }

    fn polish(&self, mut x: f64) -> f64 {
        for _ in 0..NEWTON_STEPS {
            let fx = self.eval(x);
            let dfx = self.derivative(x);
            if fx == 0.0 || dfx == 0.0 || !dfx.is_finite() {
                break;
            }
            let next = x - fx / dfx;
            // keep the step only when it lowers the residual; near a double
            // root Newton can wander
            if !next.is_finite() || self.eval(next).abs() > fx.abs() {
                break;
            }
            x = next;
        }
        x
    }
}

fn closed_form_candidates(p: &CubicCoefficients) -> Vec<f64> {
    let a = p.c2 / p.c3;
    let b = p.c1 / p.c3;
    let c = p.c0 / p.c3;
    let shift = a / 3.0;
    // depressed cubic t^3 + pp t + qq with x = t - a/3
    let pp = b - a * a / 3.0;
    let qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;

    if pp == 0.0 && qq == 0.0 {
        return vec![-shift];
    }

    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
    if disc <= 0.0 {
        // three real roots, pp < 0
        let r = 2.0 * (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (pp * r)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|i| r * (theta - 2.0 * std::f64::consts::PI * i as f64 / 3.0).cos() - shift)
            .collect()
    } else {
        let sq = disc.sqrt();
        // pick the sign that avoids cancellation
        let w = if qq >= 0.0 {
            -qq / 2.0 - sq
        } else {
            -qq / 2.0 + sq
        };
        let u = w.cbrt();
        let v = if u == 0.0 { 0.0 } else { -pp / (3.0 * u) };
        let real = u + v - shift;
        // real part of the complex pair: accepted only if polishing shows it
        // is really a (near-)double real root
        let pair = -(u + v) / 2.0 - shift;
        vec![real, pair]
    }
}
