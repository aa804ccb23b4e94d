//! Unscented time update over a simulated drive, without GNSS.

use tcnav::cdgnss::AntennaGeometry;
use tcnav::ins::{diagonal_cov, ukf_propagate};
use tcnav::manifold::Belief;
use tcnav::sim::{scenario_imu, synth_imu, synth_truth, Scenario};
use tcnav::ut::UtParams;
use tcnav::vdc::VdcParams;

fn main() -> tcnav::error::Result<()> {
    let sc = Scenario { duration: 30.0, ..Scenario::default() };
    let p = scenario_imu(&sc);
    let truth = synth_truth(&sc, &VdcParams::default(), &AntennaGeometry::default())?;
    let (imu, _) = synth_imu(&truth, &p, sc.seed)?;
    let cov = diagonal_cov(0.01, 0.01, nalgebra::Vector3::repeat(0.2f64.to_radians()), p.accel_bias_std, p.gyro_bias_std);
    let mut b = Belief::new(truth.states[0].clone(), cov);
    for (k, u) in imu.iter().enumerate() {
        b = ukf_propagate(&b, u, &p, sc.dt(), &UtParams::SCALED)?;
        if (k + 1) % 1000 == 0 {
            let e = b.mean.ominus(&truth.states[k + 1])?;
            println!(
                "t {:>5.1} s  position error {:>7.3} m  (1-sigma {:>6.3} m)",
                truth.t[k + 1],
                e.fixed_rows::<3>(0).norm(),
                (b.cov[(0, 0)] + b.cov[(1, 1)] + b.cov[(2, 2)]).sqrt()
            );
        }
    }
    Ok(())
}
