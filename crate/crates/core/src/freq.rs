//! Frequency-domain checks on the open loop
//! `L(s) = -(k e^{-d s})^2 / ((m1 s^2 + b1 s + k)(m2 s^2 + b2 s + k))`.
//!
//! Both open-loop factors have their poles in the open left half-plane, so the
//! closed loop is stable iff the Nyquist contour of `L` does not encircle
//! `-1`. `L(0) = -1` for every configuration: the common-mode position is a
//! pure integrator, which puts a closed-loop root at `s = 0`. The contour is
//! indented to the right of that root (and of any root sitting exactly on the
//! imaginary axis), so the winding number counts right-half-plane roots only.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{AxisPair, ComplexValue, CouplingConfig};

/// Upper bound on evaluated points during contour refinement.
pub const MAX_CONTOUR_POINTS: usize = 10_000_000;
/// Distance to `-1` below which an unresolvable phase jump is treated as a
/// root sitting on the imaginary axis.
pub const ON_AXIS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    spacing: Spacing,
}

impl FrequencyGrid {
    pub fn log(lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::check_bounds(lo, hi, points)?;
        let (llo, lhi) = (lo.ln(), hi.ln());
        let step = (lhi - llo) / (points - 1) as f64;
        let mut omegas: Vec<f64> = (0..points).map(|i| (llo + step * i as f64).exp()).collect();
        omegas[0] = lo;
        omegas[points - 1] = hi;
        Self::from_omegas(omegas, Spacing::Log)
    }

    pub fn linear(lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::check_bounds(lo, hi, points)?;
        let step = (hi - lo) / (points - 1) as f64;
        let mut omegas: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
        omegas[points - 1] = hi;
        Self::from_omegas(omegas, Spacing::Linear)
    }

    pub fn from_omegas(omegas: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if omegas.len() < 2 {
            return Err(invalid("grid", "at least two frequencies are required"));
        }
        if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("grid", "frequencies must be finite and > 0"));
        }
        if omegas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(invalid("grid", "frequencies must be strictly ascending"));
        }
        Ok(Self { omegas, spacing })
    }

    fn check_bounds(lo: f64, hi: f64, points: usize) -> Result<()> {
        if points < 2 {
            return Err(invalid("grid", "at least two frequencies are required"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(invalid(
                "grid",
                format!("need 0 < lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
}

impl Default for FrequencyGrid {
    /// 4096 log-spaced points over `[1e-2, 1e3]` rad/s.
    fn default() -> Self {
        Self::log(1e-2, 1e3, 4096).expect("default grid is valid")
    }
}

fn loop_value(pair: &AxisPair, k: f64, delay: f64, omega: f64) -> ComplexValue {
    let s = ComplexValue::new(0.0, omega);
    let z = ComplexValue::from_polar(1.0, -delay * omega);
    -(z * z * (k * k)) / (pair.robot1.impedance(s, k) * pair.robot2.impedance(s, k))
}

/// `L(j omega)` for one axis.
pub fn open_loop_response(config: &CouplingConfig, axis: &str, omega: f64) -> Result<ComplexValue> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(invalid("omega", format!("must be > 0, got {omega}")));
    }
    let pair = config.axis(axis)?;
    Ok(loop_value(pair, config.stiffness(), config.delay(), omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    /// rad/s
    pub omega: f64,
    pub value: ComplexValue,
    pub magnitude_db: f64,
    /// degrees, continuous in omega
    pub phase_deg: f64,
}

/// Magnitude and unwrapped phase of `L(j omega)` over the grid.
///
/// The magnitude is computed without the delay factor, so configurations that
/// differ only in delay produce bit-identical magnitudes. The phase starts at
/// -180 degrees as omega -> 0.
pub fn sweep_response(
    config: &CouplingConfig,
    axis: &str,
    grid: &FrequencyGrid,
) -> Result<Vec<FrequencyResponse>> {
    let pair = *config.axis(axis)?;
    let (k, delay) = (config.stiffness(), config.delay());
    Ok(grid
        .omegas()
        .par_iter()
        .map(|&omega| {
            let s = ComplexValue::new(0.0, omega);
            let z1 = pair.robot1.impedance(s, k);
            let z2 = pair.robot2.impedance(s, k);
            let magnitude = k * k / (z1.norm() * z2.norm());
            // arg of m s^2 + b s + k lies in (0, pi) for omega > 0
            let phase = -PI - 2.0 * delay * omega - z1.arg() - z2.arg();
            FrequencyResponse {
                omega,
                value: loop_value(&pair, k, delay, omega),
                magnitude_db: 20.0 * magnitude.log10(),
                phase_deg: phase.to_degrees(),
            }
        })
        .collect())
}

pub fn write_response_csv<W: Write>(mut out: W, rows: &[FrequencyResponse]) -> std::io::Result<()> {
    writeln!(out, "omega,re,im,mag_db,phase_deg")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.omega, r.value.re, r.value.im, r.magnitude_db, r.phase_deg
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistResult {
    /// Clockwise encirclements of -1 by the closed contour; equals the number
    /// of closed-loop roots in the open right half-plane.
    pub winding: i64,
    /// Smallest `|L(j omega) + 1|` seen away from `omega = 0`.
    pub min_distance: f64,
    pub min_distance_omega: f64,
    /// Number of on-axis crossings that were passed by indentation.
    pub on_axis_crossings: usize,
    pub points_evaluated: usize,
}

impl NyquistResult {
    pub fn is_stable(&self) -> bool {
        self.winding == 0
    }

    pub fn is_marginal(&self, tol: f64) -> bool {
        self.min_distance < tol
    }
}

fn principal(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

struct Contour<'a> {
    pair: &'a AxisPair,
    k: f64,
    delay: f64,
    evaluated: usize,
    min_distance: f64,
    min_distance_omega: f64,
    on_axis: usize,
}

impl Contour<'_> {
    fn g(&mut self, omega: f64) -> Result<ComplexValue> {
        self.evaluated += 1;
        if self.evaluated > MAX_CONTOUR_POINTS {
            return Err(Error::UnresolvedContour {
                omega_lo: omega,
                omega_hi: omega,
                max_points: MAX_CONTOUR_POINTS,
            });
        }
        let g = loop_value(self.pair, self.k, self.delay, omega) + 1.0;
        self.note(omega, g);
        Ok(g)
    }

    fn note(&mut self, omega: f64, g: ComplexValue) {
        let d = g.norm();
        if d < self.min_distance {
            self.min_distance = d;
            self.min_distance_omega = omega;
        }
    }

    /// Continuous phase change of `1 + L` from `wa` to `wb`, refining until
    /// every step is below a quarter turn.
    fn phase_change(
        &mut self,
        wa: f64,
        ga: ComplexValue,
        wb: f64,
        gb: ComplexValue,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut stack = vec![(wa, ga, wb, gb)];
        // depth-first, left interval first, so increments are summed in order
        while let Some((wa, ga, wb, gb)) = stack.pop() {
            let step = principal(gb.arg() - ga.arg());
            if step.abs() < FRAC_PI_2 {
                total += step;
                continue;
            }
            let mid = 0.5 * (wa + wb);
            if mid <= wa || mid >= wb || (wb - wa) <= 1e-13 * wb {
                if ga.norm().min(gb.norm()) <= ON_AXIS_TOL {
                    // the contour runs through -1: go round it on the right,
                    // which is a counter-clockwise half turn
                    self.on_axis += 1;
                    total += if step > 0.0 { step } else { step + 2.0 * PI };
                    continue;
                }
                return Err(Error::UnresolvedContour {
                    omega_lo: wa,
                    omega_hi: wb,
                    max_points: MAX_CONTOUR_POINTS,
                });
            }
            let gm = self.g(mid)?;
            stack.push((mid, gm, wb, gb));
            stack.push((wa, ga, mid, gm));
        }
        Ok(total)
    }
}

/// Winding number of the closed Nyquist contour of `L` around `-1`.
///
/// The positive-frequency half is integrated over the grid (refined where
/// needed); the negative half follows by conjugate symmetry; the arc at
/// infinity adds nothing because `L -> 0`.
pub fn nyquist_encirclements(
    config: &CouplingConfig,
    axis: &str,
    grid: &FrequencyGrid,
) -> Result<NyquistResult> {
    let pair = config.axis(axis)?;
    let mut contour = Contour {
        pair,
        k: config.stiffness(),
        delay: config.delay(),
        evaluated: 0,
        min_distance: f64::INFINITY,
        min_distance_omega: f64::NAN,
        on_axis: 0,
    };
    let omegas = grid.omegas();

    let values: Vec<ComplexValue> = omegas
        .par_iter()
        .map(|&w| loop_value(pair, contour.k, contour.delay, w) + 1.0)
        .collect();
    contour.evaluated = values.len();
    for (&w, &g) in omegas.iter().zip(&values) {
        contour.note(w, g);
    }

    let last_l = values[values.len() - 1] - 1.0;
    if last_l.norm() >= 0.5 {
        return Err(invalid(
            "grid",
            format!(
                "|L| = {} at the top frequency {} rad/s; extend the grid",
                last_l.norm(),
                omegas[omegas.len() - 1]
            ),
        ));
    }

    // near omega = 0, 1 + L ~ j omega (2 d + (b1 + b2) / k): phase +pi/2,
    // and the right indentation around s = 0 contributes +pi
    let w_tiny = omegas[0] * 1e-6;
    let g_tiny = loop_value(pair, contour.k, contour.delay, w_tiny) + 1.0;
    contour.evaluated += 1;
    if principal(g_tiny.arg() - FRAC_PI_2).abs() > PI / 4.0 {
        return Err(invalid(
            "grid",
            "lowest frequency is not in the low-frequency regime of the contour",
        ));
    }
    let mut positive_half = principal(g_tiny.arg() - FRAC_PI_2);
    positive_half += contour.phase_change(w_tiny, g_tiny, omegas[0], values[0])?;
    for i in 1..omegas.len() {
        positive_half +=
            contour.phase_change(omegas[i - 1], values[i - 1], omegas[i], values[i])?;
    }
    // omega_max -> infinity: 1 + L -> 1
    positive_half += principal(-values[values.len() - 1].arg());

    let total = 2.0 * positive_half + PI;
    let turns = -total / (2.0 * PI);
    let winding = turns.round();
    if (turns - winding).abs() > 0.25 {
        return Err(invalid(
            "grid",
            format!("contour phase did not close (turns = {turns})"),
        ));
    }

    Ok(NyquistResult {
        winding: winding as i64,
        min_distance: contour.min_distance,
        min_distance_omega: contour.min_distance_omega,
        on_axis_crossings: contour.on_axis,
        points_evaluated: contour.evaluated,
    })
}

/// Nyquist points `(omega, L(j omega))` for plotting, positive frequencies.
pub fn nyquist_points(
    config: &CouplingConfig,
    axis: &str,
    grid: &FrequencyGrid,
) -> Result<Vec<(f64, ComplexValue)>> {
    let pair = config.axis(axis)?;
    let (k, delay) = (config.stiffness(), config.delay());
    Ok(grid
        .omegas()
        .iter()
        .map(|&w| (w, loop_value(pair, k, delay, w)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::max_tolerable_delay_identical;
    use crate::model::{base_dynamics, AxisDynamics};

    fn base(k: f64, delay: f64) -> CouplingConfig {
        CouplingConfig::single_axis(AxisPair::identical(base_dynamics()), k, delay).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::log(1.0, 10.0, 1).is_err());
        assert!(FrequencyGrid::log(0.0, 10.0, 5).is_err());
        assert!(FrequencyGrid::linear(5.0, 1.0, 5).is_err());
        assert!(FrequencyGrid::from_omegas(vec![1.0, 1.0], Spacing::Linear).is_err());
        assert!(FrequencyGrid::from_omegas(vec![], Spacing::Linear).is_err());
        let g = FrequencyGrid::default();
        assert_eq!(g.omegas().len(), 4096);
        assert_eq!(g.omegas()[0], 1e-2);
        assert_eq!(g.omegas()[4095], 1e3);
    }

    #[test]
    fn low_frequency_limit_is_minus_one() {
        let l = open_loop_response(&base(50.0, 0.1), "x", 1e-6).unwrap();
        assert!((l + 1.0).norm() < 1e-5);
    }

    #[test]
    fn high_frequency_decay() {
        let cfg = base(50.0, 0.0);
        let d = base_dynamics();
        let omega = 1e3;
        let l = open_loop_response(&cfg, "x", omega).unwrap();
        let approx = 50.0f64.powi(2) / (d.mass() * d.mass() * omega.powi(4));
        assert!((l.norm() - approx).abs() / approx < 1e-2);
    }

    #[test]
    fn marginal_crossing_touches_minus_one() {
        let d = base_dynamics();
        let c = max_tolerable_delay_identical(&d, 72.0).unwrap().unwrap();
        let l = open_loop_response(&base(72.0, c.delay), "x", c.omega).unwrap();
        assert!((l + 1.0).norm() < 1e-9);
        let l = open_loop_response(&base(72.0, 0.169), "x", 9.32).unwrap();
        assert!((l + 1.0).norm() < 0.05);
    }

    #[test]
    fn winding_zero_without_delay() {
        let r = nyquist_encirclements(&base(10.0 * 35.809, 0.0), "x", &FrequencyGrid::default())
            .unwrap();
        assert_eq!(r.winding, 0);
    }

    #[test]
    fn winding_positive_when_unstable() {
        let r = nyquist_encirclements(&base(72.0, 0.34), "x", &FrequencyGrid::default()).unwrap();
        assert!(r.winding > 0, "{r:?}");
        assert_eq!(r.winding % 2, 0);
    }

    #[test]
    fn exact_boundary_is_indented() {
        let d = base_dynamics();
        let c = max_tolerable_delay_identical(&d, 72.0).unwrap().unwrap();
        let r =
            nyquist_encirclements(&base(72.0, c.delay), "x", &FrequencyGrid::default()).unwrap();
        assert_eq!(r.winding, 0);
        assert!(r.min_distance < 1e-6);
    }

    #[test]
    fn delay_changes_phase_only() {
        let grid = FrequencyGrid::log(0.1, 100.0, 300).unwrap();
        let a = sweep_response(&base(71.0, 0.084), "x", &grid).unwrap();
        let b = sweep_response(&base(71.0, 0.334), "x", &grid).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.magnitude_db.to_bits(), rb.magnitude_db.to_bits());
            let expected = -2.0 * (0.334 - 0.084) * ra.omega * 180.0 / PI;
            assert!((rb.phase_deg - ra.phase_deg - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_consistent_with_value() {
        let grid = FrequencyGrid::log(0.05, 200.0, 500).unwrap();
        let rows = sweep_response(&base(71.0, 0.2), "x", &grid).unwrap();
        for w in rows.windows(2) {
            assert!((w[1].phase_deg - w[0].phase_deg).abs() < 180.0);
        }
        for r in &rows {
            let db = 20.0 * r.value.norm().log10();
            assert!((db - r.magnitude_db).abs() < 1e-9);
            let diff = principal((r.phase_deg - r.value.arg().to_degrees()).to_radians());
            assert!(diff.abs() < 1e-9);
        }
    }

    #[test]
    fn more_damping_lowers_peak() {
        let grid = FrequencyGrid::default();
        let peak = |b: f64| {
            let d = AxisDynamics::new(0.8334, b).unwrap();
            let cfg = CouplingConfig::single_axis(AxisPair::identical(d), 72.0, 0.1).unwrap();
            sweep_response(&cfg, "x", &grid)
                .unwrap()
                .iter()
                .map(|r| r.magnitude_db)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        assert!(peak(2.0 * 7.7257) < peak(7.7257));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let grid = FrequencyGrid::log(1.0, 10.0, 3).unwrap();
        let rows = sweep_response(&base(36.0, 0.1), "x", &grid).unwrap();
        let mut buf = Vec::new();
        write_response_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("omega,re,im,mag_db,phase_deg\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
