//! Sigma-point versus first-order linearization of the antenna baselines
//! as the heading prior widens.

use nalgebra::Vector3;
use tcnav::cdgnss::{linearize_ekf, linearize_ukf, AntennaGeometry};
use tcnav::ins::diagonal_cov;
use tcnav::manifold::{Belief, NavState};
use tcnav::ut::UtParams;

fn main() -> tcnav::error::Result<()> {
    let geom = AntennaGeometry::default();
    println!("{:>8} {:>10} {:>10} {:>12} {:>12}", "yaw_deg", "|b2| ekf", "|b2| ukf", "tr(Sigma_b)", "|H_ukf-H_ekf|");
    for sigma in [0.5, 2.0, 8.0, 15.0, 30.0, 60.0, 90.0] {
        let att = Vector3::new(2.0, 2.0, sigma).map(f64::to_radians);
        let b = Belief::new(NavState::default(), diagonal_cov(0.03, 0.1, att, 0.01, 1e-4));
        let e = linearize_ekf(&b, &geom);
        let u = linearize_ukf(&b, &geom, &UtParams::MOMENT_MATCHED)?;
        println!(
            "{sigma:>8.1} {:>10.4} {:>10.4} {:>12.3e} {:>12.3e}",
            e.mean.fixed_rows::<3>(3).norm(),
            u.mean.fixed_rows::<3>(3).norm(),
            u.error_cov.trace(),
            (u.jacobian - e.jacobian).norm()
        );
    }
    Ok(())
}
