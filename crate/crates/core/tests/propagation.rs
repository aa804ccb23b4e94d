mod common;

use nalgebra::Vector3;
use proptest::prelude::*;
use tcnav::ins::{
    diagonal_cov, dynamics, ekf_covariance, ukf_propagate, ImuParams, ImuSample, OuDiscretization, Vec12,
};
use tcnav::manifold::{exp_map, Belief, NavState, BA, BG};
use tcnav::ut::UtParams;

fn attitude() -> impl Strategy<Value = Vector3<f64>> {
    (-1.4f64..1.4, -3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn resting_vehicle_stays_put(t in attitude(), mount in attitude()) {
        let p = ImuParams { body_to_imu: exp_map(&(mount * 0.1)), ..ImuParams::default() };
        let att = exp_map(&t);
        let mut x = NavState { pos: Vector3::new(10.0, -4.0, 2.0), att, ..Default::default() };
        let u = p.stationary_sample(&att, 0.0);
        for _ in 0..200 {
            let next = dynamics(&x, &u, &Vec12::zeros(), &p, p.dt);
            prop_assert!(next.ominus(&x).unwrap().norm() < 1e-10);
            x = next;
        }
    }

    #[test]
    fn rotation_stays_orthonormal(w in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0)) {
        let p = ImuParams::default();
        let u = ImuSample { t: 0.0, accel: Vector3::new(0.0, 0.0, 9.8), gyro: Vector3::new(w.0, w.1, w.2) };
        let mut x = NavState::default();
        for _ in 0..2000 {
            x = dynamics(&x, &u, &Vec12::zeros(), &p, p.dt);
            prop_assert!(x.is_valid());
        }
    }
}

#[test]
fn ukf_matches_ekf_for_small_covariance() {
    let p = ImuParams::default();
    let x = NavState {
        vel: Vector3::new(8.0, 1.0, 0.0),
        att: exp_map(&Vector3::new(0.05, -0.02, 0.7)),
        ..Default::default()
    };
    let cov = diagonal_cov(1e-3, 1e-3, Vector3::repeat(1e-4), 1e-4, 1e-6);
    let u = ImuSample { t: 0.0, accel: Vector3::new(0.5, 0.2, 9.81), gyro: Vector3::new(0.01, -0.02, 0.3) };
    let ukf = ukf_propagate(&Belief::new(x.clone(), cov), &u, &p, p.dt, &UtParams::SCALED).unwrap();
    let ekf = ekf_covariance(&x, &cov, &u, &p, p.dt).unwrap();
    let rel = (ukf.cov - ekf).norm() / ekf.norm();
    assert!(rel < 1e-6, "{rel}");
    let centre = dynamics(&x, &u, &Vec12::zeros(), &p, p.dt);
    assert!(ukf.mean.ominus(&centre).unwrap().norm() < 1e-9);
}

fn bias_variance(form: OuDiscretization) -> (f64, f64) {
    let p = ImuParams { dt: 1.0, ou: form, ..ImuParams::default() };
    let x = NavState::default();
    let u = p.stationary_sample(&x.att, 0.0);
    let mut b = Belief::new(x, diagonal_cov(0.1, 0.1, Vector3::repeat(1e-3), 0.0, 0.0));
    for _ in 0..1500 {
        b = ukf_propagate(&b, &u, &p, p.dt, &UtParams::SCALED).unwrap();
    }
    (b.cov[(BA, BA)] / p.accel_bias_std.powi(2), b.cov[(BG, BG)] / p.gyro_bias_std.powi(2))
}

#[test]
fn exact_bias_discretization_is_stationary_at_sigma() {
    let (a, g) = bias_variance(OuDiscretization::Exact);
    assert!((a - 1.0).abs() < 0.01 && (g - 1.0).abs() < 0.01, "{a} {g}");
}

#[test]
fn single_exponent_form_settles_near_half() {
    let (a, _) = bias_variance(OuDiscretization::SingleExponent);
    assert!((a - 0.5).abs() < 0.01, "{a}");
}

#[test]
fn covariance_grows_without_measurements() {
    let p = ImuParams::default();
    let x = NavState::default();
    let u = p.stationary_sample(&x.att, 0.0);
    let mut b = Belief::new(x, diagonal_cov(0.01, 0.01, Vector3::repeat(1e-3), 1e-3, 1e-5));
    let before = b.cov;
    for _ in 0..200 {
        b = ukf_propagate(&b, &u, &p, p.dt, &UtParams::SCALED).unwrap();
    }
    assert!(b.mean.is_valid());
    for i in 0..3 {
        assert!(b.cov[(i, i)] > before[(i, i)]);
    }
    assert!(b.min_eigenvalue() > 0.0);
}
