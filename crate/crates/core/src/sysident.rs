//! Identification of per-axis mass and damping from excitation data.
//!
//! The robot follows a multi-harmonic velocity command; force is regressed on
//! `[acceleration, velocity]` to give `[m, b]`, either by ordinary least
//! squares or by iteratively reweighted least squares with weights
//! `1 / (r^2 + eps)`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::AxisDynamics;

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_EXCITATION_OMEGA: f64 = 1.0;

/// Velocity command `sum_i A_i cos(i w t) + B_i sin(i w t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationProfile {
    /// m/s
    pub cosine_amps: Vec<f64>,
    /// m/s
    pub sine_amps: Vec<f64>,
    /// fundamental, rad/s
    pub omega: f64,
}

impl ExcitationProfile {
    pub fn new(cosine_amps: Vec<f64>, sine_amps: Vec<f64>, omega: f64) -> Result<Self> {
        if cosine_amps.is_empty() || cosine_amps.len() != sine_amps.len() {
            return Err(invalid(
                "harmonics",
                format!(
                    "need equally many (>= 1) cosine and sine amplitudes, got {} and {}",
                    cosine_amps.len(),
                    sine_amps.len()
                ),
            ));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid("omega", format!("must be > 0, got {omega}")));
        }
        Ok(Self {
            cosine_amps,
            sine_amps,
            omega,
        })
    }

    /// Five harmonics with `A = B = [0.01, 0.02, 0.05, 0.1, 0.15]` m/s.
    pub fn standard(omega: f64) -> Result<Self> {
        let amps = vec![0.01, 0.02, 0.05, 0.1, 0.15];
        Self::new(amps.clone(), amps, omega)
    }

    pub fn harmonic_count(&self) -> usize {
        self.cosine_amps.len()
    }

    /// Upper bound on `|v(t)|`.
    pub fn peak_velocity_bound(&self) -> f64 {
        self.cosine_amps
            .iter()
            .zip(&self.sine_amps)
            .map(|(a, b)| a.hypot(*b))
            .sum()
    }

    /// Position (with `x(0) = 0`), velocity and acceleration at `t`.
    pub fn kinematics(&self, t: f64) -> (f64, f64, f64) {
        let (mut x, mut v, mut a) = (0.0, 0.0, 0.0);
        for (i, (ca, sb)) in self.cosine_amps.iter().zip(&self.sine_amps).enumerate() {
            let w = (i + 1) as f64 * self.omega;
            let (s, c) = (w * t).sin_cos();
            x += ca * s / w + sb * (1.0 - c) / w;
            v += ca * c + sb * s;
            a += -ca * w * s + sb * w * c;
        }
        (x, v, a)
    }
}

/// Uniformly sampled single-axis record. `force` may be empty for pure
/// kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub force: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        for len in [
            self.position.len(),
            self.velocity.len(),
            self.acceleration.len(),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: len,
                });
            }
        }
        if !self.force.is_empty() && self.force.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: self.force.len(),
            });
        }
        if n >= 2 {
            let dt = self.times[1] - self.times[0];
            if dt <= 0.0 {
                return Err(invalid("times", "must be strictly increasing"));
            }
            for (i, w) in self.times.windows(2).enumerate() {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 {
                    return Err(invalid(
                        "times",
                        format!("non-uniform spacing at sample {}", i + 1),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Same record with every timestamp shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t + offset).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,v,a,f")?;
        for i in 0..self.len() {
            let f = self.force.get(i).map(|f| f.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i], self.position[i], self.velocity[i], self.acceleration[i], f
            )?;
        }
        Ok(())
    }

    /// Reads `t,x,v,a,f` rows; the header line is required.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header_ok = reader
            .headers()
            .map(|h| h.iter().collect::<Vec<_>>() == ["t", "x", "v", "a", "f"])
            .unwrap_or(false);
        if !header_ok {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `t,x,v,a,f`".into(),
            });
        }
        let mut rec = TrajectoryRecord {
            times: Vec::new(),
            position: Vec::new(),
            velocity: Vec::new(),
            acceleration: Vec::new(),
            force: Vec::new(),
        };
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
            if row.len() != 5 {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected 5 fields, found {}", row.len()),
                });
            }
            let mut vals = [0.0; 5];
            for (j, field) in row.iter().enumerate() {
                vals[j] = field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    reason: format!("field {} is not a number: `{field}`", j + 1),
                })?;
            }
            rec.times.push(vals[0]);
            rec.position.push(vals[1]);
            rec.velocity.push(vals[2]);
            rec.acceleration.push(vals[3]);
            rec.force.push(vals[4]);
        }
        rec.validate()?;
        Ok(rec)
    }
}

/// Samples the excitation on `[0, duration]` with step `dt`. Position and
/// acceleration come from term-wise integration and differentiation.
pub fn generate_excitation(
    profile: &ExcitationProfile,
    duration: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    let period = 2.0 * std::f64::consts::PI / profile.omega;
    if !(duration.is_finite() && duration >= period * (1.0 - 1e-12)) {
        return Err(invalid(
            "duration",
            format!("must cover one fundamental period ({period} s), got {duration}"),
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let n = (duration / dt + 1e-9).floor() as usize + 1;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n),
        position: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
        acceleration: Vec::with_capacity(n),
        force: Vec::new(),
    };
    for i in 0..n {
        let t = i as f64 * dt;
        let (x, v, a) = profile.kinematics(t);
        rec.times.push(t);
        rec.position.push(x);
        rec.velocity.push(v);
        rec.acceleration.push(a);
    }
    Ok(rec)
}

/// Attaches `m a + b v + N(0, noise_std^2)` as the measured force.
pub fn simulate_measurement(
    dynamics: &AxisDynamics,
    kinematics: &TrajectoryRecord,
    noise_std: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(invalid(
            "noise_std",
            format!("must be >= 0, got {noise_std}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("std checked above");
    let force = kinematics
        .acceleration
        .iter()
        .zip(&kinematics.velocity)
        .map(|(a, v)| {
            let clean = dynamics.mass() * a + dynamics.damping() * v;
            if noise_std > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    Ok(TrajectoryRecord {
        force,
        ..kinematics.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    /// kg
    pub mass_hat: f64,
    /// N s/m
    pub damping_hat: f64,
    /// N
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IdentificationResult {
    pub fn to_dynamics(&self) -> Result<AxisDynamics> {
        AxisDynamics::new(self.mass_hat, self.damping_hat)
    }
}

struct Regression {
    x: DMatrix<f64>,
    f: DVector<f64>,
}

/// Relative size of the smaller triangular pivot below which the regressors
/// are treated as collinear.
const RANK_TOL: f64 = 1e-10;

fn regression(record: &TrajectoryRecord) -> Result<Regression> {
    record.validate()?;
    let n = record.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    if record.force.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: record.force.len(),
        });
    }
    let x = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            record.acceleration[i]
        } else {
            record.velocity[i]
        }
    });
    Ok(Regression {
        x,
        f: DVector::from_column_slice(&record.force),
    })
}

/// Least-squares solve through a thin QR factorization, with weights applied
/// as row scaling by `sqrt(w)`.
fn solve(reg: &Regression, weights: Option<&[f64]>) -> Result<[f64; 2]> {
    let (mut x, mut f) = (reg.x.clone(), reg.f.clone());
    if let Some(w) = weights {
        for (i, wi) in w.iter().enumerate() {
            let s = wi.sqrt();
            x[(i, 0)] *= s;
            x[(i, 1)] *= s;
            f[i] *= s;
        }
    }
    let norms = [x.column(0).norm(), x.column(1).norm()];
    if norms[0] == 0.0 {
        return Err(Error::RankDeficient(
            "acceleration column is identically zero".into(),
        ));
    }
    if norms[1] == 0.0 {
        return Err(Error::RankDeficient(
            "velocity column is identically zero".into(),
        ));
    }
    // scale columns so the pivot test is unit-free
    x.column_mut(0).scale_mut(1.0 / norms[0]);
    x.column_mut(1).scale_mut(1.0 / norms[1]);
    let qr = x.qr();
    let r = qr.r();
    if r[(1, 1)].abs() <= RANK_TOL * r[(0, 0)].abs() {
        return Err(Error::RankDeficient(
            "acceleration and velocity are collinear".into(),
        ));
    }
    let qtf = qr.q().transpose() * f;
    let b1 = qtf[1] / r[(1, 1)];
    let b0 = (qtf[0] - r[(0, 1)] * b1) / r[(0, 0)];
    Ok([b0 / norms[0], b1 / norms[1]])
}

fn residuals(reg: &Regression, beta: [f64; 2]) -> Vec<f64> {
    (0..reg.f.len())
        .map(|i| reg.f[i] - beta[0] * reg.x[(i, 0)] - beta[1] * reg.x[(i, 1)])
        .collect()
}

fn rms(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn estimate_ols(record: &TrajectoryRecord) -> Result<IdentificationResult> {
    let reg = regression(record)?;
    let beta = solve(&reg, None)?;
    let r = residuals(&reg, beta);
    Ok(IdentificationResult {
        mass_hat: beta[0],
        damping_hat: beta[1],
        residual_rms: rms(r.iter().copied()),
        iterations: 0,
        converged: true,
    })
}

/// Weight floor `eps * max(1, rms(F))^2`.
pub fn weight_floor(force: &[f64]) -> f64 {
    let scale = rms(force.iter().copied()).max(1.0);
    f64::EPSILON * scale * scale
}

/// IRLS weights `1 / (r^2 + eps)` for the given residuals.
pub fn irls_weights(residuals: &[f64], floor: f64) -> Vec<f64> {
    residuals.iter().map(|r| 1.0 / (r * r + floor)).collect()
}

/// Iteratively reweighted least squares started from the OLS solution.
/// Stops once the relative parameter change falls below `tol`.
pub fn estimate_wls(
    record: &TrajectoryRecord,
    max_iter: usize,
    tol: f64,
) -> Result<IdentificationResult> {
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be >= 1"));
    }
    let reg = regression(record)?;
    let floor = weight_floor(&record.force);
    let mut beta = solve(&reg, None)?;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        let weights = irls_weights(&residuals(&reg, beta), floor);
        let next = solve(&reg, Some(&weights))?;
        let change = ((next[0] - beta[0]).powi(2) + (next[1] - beta[1]).powi(2)).sqrt()
            / (beta[0].powi(2) + beta[1].powi(2))
                .sqrt()
                .max(f64::MIN_POSITIVE);
        beta = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    let r = residuals(&reg, beta);
    Ok(IdentificationResult {
        mass_hat: beta[0],
        damping_hat: beta[1],
        residual_rms: rms(r.iter().copied()),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_harmonic_kinematics() {
        let p = ExcitationProfile::new(vec![0.0], vec![1.0], 1.0).unwrap();
        let rec = generate_excitation(&p, 7.0, 0.01).unwrap();
        for i in 0..rec.len() {
            let t = rec.times[i];
            assert!((rec.velocity[i] - t.sin()).abs() < 1e-12);
            assert!((rec.position[i] - (1.0 - t.cos())).abs() < 1e-12);
            assert!((rec.acceleration[i] - t.cos()).abs() < 1e-12);
        }
        assert!(rec.force.is_empty());
    }

    #[test]
    fn standard_profile_bounds() {
        let p = ExcitationProfile::standard(1.0).unwrap();
        assert_eq!(p.harmonic_count(), 5);
        let bound = p.peak_velocity_bound();
        assert!((bound - 0.466).abs() < 1e-3, "{bound}");
        let period = 2.0 * std::f64::consts::PI;
        let rec = generate_excitation(&p, 3.0 * period, period / 3000.0).unwrap();
        assert!(rec.velocity.iter().all(|v| v.abs() <= bound + 1e-12));
        // drop the closing sample so the mean covers whole periods
        let n = rec.len() - 1;
        let mean = rec.velocity[..n].iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-12, "{mean}");
    }

    #[test]
    fn excitation_preconditions() {
        let p = ExcitationProfile::standard(1.0).unwrap();
        assert!(generate_excitation(&p, 1.0, 0.01).is_err());
        assert!(generate_excitation(&p, 10.0, 0.0).is_err());
        assert!(ExcitationProfile::new(vec![], vec![], 1.0).is_err());
        assert!(ExcitationProfile::new(vec![1.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(ExcitationProfile::new(vec![1.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn noiseless_measurement_and_ols() {
        let d = AxisDynamics::new(0.8334, 7.7257).unwrap();
        let kin =
            generate_excitation(&ExcitationProfile::standard(1.0).unwrap(), 20.0, 1e-3).unwrap();
        let rec = simulate_measurement(&d, &kin, 0.0, 1).unwrap();
        for i in 0..rec.len() {
            assert_eq!(
                rec.force[i],
                d.mass() * rec.acceleration[i] + d.damping() * rec.velocity[i]
            );
        }
        let est = estimate_ols(&rec).unwrap();
        assert!((est.mass_hat - d.mass()).abs() < 1e-9 * d.mass());
        assert!((est.damping_hat - d.damping()).abs() < 1e-9 * d.damping());
        let wls = estimate_wls(&rec, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(wls.converged);
        assert_eq!(wls.iterations, 1);
        assert!((wls.mass_hat - est.mass_hat).abs() < 1e-9 * d.mass());
    }

    #[test]
    fn constant_velocity_is_rank_deficient() {
        let n = 100;
        let rec = TrajectoryRecord {
            times: (0..n).map(|i| i as f64 * 0.01).collect(),
            position: (0..n).map(|i| i as f64 * 0.01 * 0.2).collect(),
            velocity: vec![0.2; n],
            acceleration: vec![0.0; n],
            force: vec![1.5; n],
        };
        let err = estimate_ols(&rec).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(ref m) if m.contains("acceleration")));
        // proportional columns
        let rec = TrajectoryRecord {
            acceleration: vec![0.4; n],
            ..rec
        };
        assert!(matches!(estimate_ols(&rec), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let d = AxisDynamics::new(1.0, 5.0).unwrap();
        let kin =
            generate_excitation(&ExcitationProfile::standard(1.0).unwrap(), 7.0, 1e-2).unwrap();
        let a = simulate_measurement(&d, &kin, 0.1, 42).unwrap();
        let b = simulate_measurement(&d, &kin, 0.1, 42).unwrap();
        let c = simulate_measurement(&d, &kin, 0.1, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.force, c.force);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let d = AxisDynamics::new(1.0, 5.0).unwrap();
        let kin =
            generate_excitation(&ExcitationProfile::standard(1.0).unwrap(), 7.0, 0.5).unwrap();
        let rec = simulate_measurement(&d, &kin, 0.0, 1).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let back = TrajectoryRecord::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rec);

        let bad = "t,x,v,a,f\n0,0,0,0,0\n0.5,0,abc,0,0\n";
        match TrajectoryRecord::read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(TrajectoryRecord::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let short = "t,x,v,a,f\n0,0,0,0\n";
        assert!(matches!(
            TrajectoryRecord::read_csv(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn weights_are_positive_and_finite() {
        let w = irls_weights(&[0.0, 1e-300, 3.0, -2.0], weight_floor(&[5.0, -5.0]));
        assert!(w.iter().all(|w| w.is_finite() && *w > 0.0));
    }
}
