use dyad_core::model::AxisDynamics;
use dyad_core::sysident::{
    estimate_ols, estimate_wls, generate_excitation, irls_weights, simulate_measurement,
    weight_floor, ExcitationProfile, TrajectoryRecord, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn kinematics(duration: f64, dt: f64) -> TrajectoryRecord {
    generate_excitation(&ExcitationProfile::standard(1.0).unwrap(), duration, dt).unwrap()
}

fn pinv_oracle(rec: &TrajectoryRecord) -> (f64, f64) {
    let n = rec.len();
    let x = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            rec.acceleration[i]
        } else {
            rec.velocity[i]
        }
    });
    let beta = x.pseudo_inverse(1e-14).unwrap() * DVector::from_column_slice(&rec.force);
    (beta[0], beta[1])
}

fn rel_err(est: (f64, f64), d: &AxisDynamics) -> f64 {
    ((est.0 - d.mass()) / d.mass())
        .abs()
        .max(((est.1 - d.damping()) / d.damping()).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ols_matches_pseudo_inverse(m in 0.2f64..3.0, b in 1.0f64..20.0, noise in 0.0f64..0.5, seed in any::<u64>()) {
        let d = AxisDynamics::new(m, b).unwrap();
        let rec = simulate_measurement(&d, &kinematics(8.0, 5e-3), noise, seed).unwrap();
        let est = estimate_ols(&rec).unwrap();
        let (mo, bo) = pinv_oracle(&rec);
        prop_assert!((est.mass_hat - mo).abs() <= 1e-9 * mo.abs());
        prop_assert!((est.damping_hat - bo).abs() <= 1e-9 * bo.abs());
        prop_assert!(est.residual_rms >= 0.0);
    }

    #[test]
    fn estimates_scale_with_force(c in 0.1f64..10.0, seed in any::<u64>()) {
        let d = AxisDynamics::new(0.7776, 7.4208).unwrap();
        let rec = simulate_measurement(&d, &kinematics(8.0, 5e-3), 0.05, seed).unwrap();
        let scaled = TrajectoryRecord { force: rec.force.iter().map(|f| f * c).collect(), ..rec.clone() };
        let (a, b) = (estimate_ols(&rec).unwrap(), estimate_ols(&scaled).unwrap());
        prop_assert!((b.mass_hat - c * a.mass_hat).abs() <= 1e-12 * b.mass_hat.abs());
        prop_assert!((b.damping_hat - c * a.damping_hat).abs() <= 1e-12 * b.damping_hat.abs());
        let (a, b) = (estimate_wls(&rec, 200, 1e-12).unwrap(), estimate_wls(&scaled, 200, 1e-12).unwrap());
        prop_assert!(a.converged && b.converged);
        prop_assert!((b.mass_hat - c * a.mass_hat).abs() <= 1e-6 * b.mass_hat.abs());
        prop_assert!((b.damping_hat - c * a.damping_hat).abs() <= 1e-6 * b.damping_hat.abs());
    }

    #[test]
    fn estimates_ignore_time_origin(shift in -100.0f64..100.0, seed in any::<u64>()) {
        let d = AxisDynamics::new(1.0649, 10.1168).unwrap();
        let rec = simulate_measurement(&d, &kinematics(8.0, 5e-3), 0.05, seed).unwrap();
        let moved = rec.shifted(shift);
        prop_assert_eq!(estimate_ols(&rec).unwrap(), estimate_ols(&moved).unwrap());
        prop_assert_eq!(
            estimate_wls(&rec, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap(),
            estimate_wls(&moved, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap()
        );
    }

    #[test]
    fn weights_finite_and_positive(r in proptest::collection::vec(-1e6f64..1e6, 1..50),
                                   f in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
        let w = irls_weights(&r, weight_floor(&f));
        prop_assert!(w.iter().all(|w| w.is_finite() && *w > 0.0));
        let zeros = irls_weights(&vec![0.0; r.len()], weight_floor(&f));
        prop_assert!(zeros.iter().all(|w| w.is_finite() && *w > 0.0));
    }
}

#[test]
fn noiseless_base_recovery() {
    let d = AxisDynamics::new(0.8334, 7.7257).unwrap();
    let rec = simulate_measurement(&d, &kinematics(20.0, 2e-3), 0.0, 0).unwrap();
    let est = estimate_ols(&rec).unwrap();
    assert!(rel_err((est.mass_hat, est.damping_hat), &d) < 1e-9);
}

#[test]
fn noise_ladder_is_monotone() {
    let d = AxisDynamics::new(0.8334, 7.7257).unwrap();
    let kin = kinematics(20.0, 2e-3);
    // average over seeds so the ladder reflects the noise level, not luck
    let mean_err = |noise: f64| {
        (0..20)
            .map(|seed| {
                let est =
                    estimate_ols(&simulate_measurement(&d, &kin, noise, seed).unwrap()).unwrap();
                rel_err((est.mass_hat, est.damping_hat), &d)
            })
            .sum::<f64>()
            / 20.0
    };
    let errs: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&n| mean_err(n)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn tenth_newton_noise_recovers_within_one_percent() {
    let d = AxisDynamics::new(0.8334, 7.7257).unwrap();
    let kin = kinematics(20.0, 2e-3);
    assert!(kin.len() >= 10_000);
    let ok = (0..100)
        .filter(|&seed| {
            let est = estimate_ols(&simulate_measurement(&d, &kin, 0.1, seed).unwrap()).unwrap();
            rel_err((est.mass_hat, est.damping_hat), &d) < 0.01
        })
        .count();
    assert!(ok >= 95, "{ok}/100");
}
