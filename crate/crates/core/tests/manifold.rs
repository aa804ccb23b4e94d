mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use tcnav::manifold::{exp_map, log_map, orthonormality_error, rotvec_exp, skew, NavState, Vec15};

fn angles() -> impl Strategy<Value = Vector3<f64>> {
    // the x rotation is the bounded middle angle of the 3-1-2 sequence
    (-1.55f64..1.55, -3.1f64..3.1, -3.1f64..3.1).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn increment() -> impl Strategy<Value = Vec15> {
    proptest::collection::vec(-2.0f64..2.0, 15).prop_map(|v| {
        let mut d = Vec15::from_vec(v);
        // keep the rotation part inside the chart
        d[6] = d[6].clamp(-1.5, 1.5);
        d
    })
}

fn state() -> impl Strategy<Value = NavState> {
    (angles(), proptest::collection::vec(-50.0f64..50.0, 12)).prop_map(|(t, v)| NavState {
        pos: Vector3::new(v[0], v[1], v[2]),
        vel: Vector3::new(v[3], v[4], v[5]),
        att: exp_map(&t),
        accel_bias: Vector3::new(v[6], v[7], v[8]) * 1e-3,
        gyro_bias: Vector3::new(v[9], v[10], v[11]) * 1e-5,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn log_inverts_exp(t in angles()) {
        let back = log_map(&exp_map(&t)).unwrap();
        prop_assert!((back - t).norm() < 1e-12, "{t} -> {back}");
    }

    #[test]
    fn exp_inverts_log(t in angles()) {
        let r = exp_map(&t);
        prop_assert!((exp_map(&log_map(&r).unwrap()) - r).norm() < 1e-12);
    }

    #[test]
    fn exp_is_a_rotation(t in angles()) {
        let r = exp_map(&t);
        prop_assert!(orthonormality_error(&r) < 1e-13);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn oplus_then_ominus(x in state(), d in increment()) {
        let y = x.oplus(&d);
        let back = y.ominus(&x).unwrap();
        prop_assert!((back - d).norm() < 1e-10 * (1.0 + d.norm()), "{}", (back - d).norm());
    }

    #[test]
    fn ominus_then_oplus(x in state(), y in state()) {
        // only meaningful when the relative rotation is inside the chart
        if let Ok(d) = y.ominus(&x) {
            let z = x.oplus(&d);
            prop_assert!((z.att - y.att).norm() < 1e-10);
            prop_assert!((z.pos - y.pos).norm() < 1e-10);
        }
    }

    #[test]
    fn rotvec_matches_series(w in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let w = Vector3::new(w.0, w.1, w.2) * 1e-3;
        let k = skew(&w);
        let series = Matrix3::identity() + k + k * k * 0.5 + k * k * k / 6.0;
        prop_assert!((rotvec_exp(&w) - series).norm() < 1e-12);
    }
}

#[test]
fn log_rejects_gimbal_lock() {
    let r = exp_map(&Vector3::new(std::f64::consts::FRAC_PI_2, 0.3, 0.1));
    assert!(log_map(&r).is_err());
}
