//! One dual-baseline carrier-phase epoch through the square-root update.

use nalgebra::Vector3;
use tcnav::ambiguity::{substream, ApertureTable};
use tcnav::cdgnss::{linearize_ukf, AntennaGeometry, NoiseModelParams};
use tcnav::ins::diagonal_cov;
use tcnav::manifold::{Belief, NavState, Vec15};
use tcnav::sim::{synth_epoch, Constellation};
use tcnav::sqrt_update::{measurement_update, FixPolicy};
use tcnav::ut::UtParams;

fn main() -> tcnav::error::Result<()> {
    let geom = AntennaGeometry::default();
    let sats = Constellation::default().satellite_set()?;
    let prior = Belief::new(
        NavState::default(),
        diagonal_cov(0.05, 0.1, Vector3::new(2.0, 2.0, 5.0).map(f64::to_radians), 0.01, 1e-4),
    );
    let mut d = Vec15::zeros();
    d[0] = 0.04;
    d[8] = 3f64.to_radians();
    let truth = prior.mean.oplus(&d);
    let (mut a, mut b) = (substream(2, 0), substream(2, 1));
    let (epoch, n_true) = synth_epoch(&truth, 0.0, &sats, &geom, &NoiseModelParams::default(), 1.0, 40, (&mut a, &mut b))?;

    let lin = linearize_ukf(&prior, &geom, &UtParams::MOMENT_MATCHED)?;
    let policy = FixPolicy { attempt_fix: true, p_f: 0.001, table: ApertureTable::builtin() };
    let up = measurement_update(&prior, &epoch, &lin, &policy)?;
    println!("status {:?}, strength {:.2}", up.outcome.status, up.outcome.strength);
    println!("integers {:?}", up.outcome.integers);
    println!("truth    {:?}", n_true.iter().map(|v| *v as i64).collect::<Vec<_>>());
    let err = up.posterior.mean.ominus(&truth)?;
    println!("position error {:.4} m, yaw error {:.3} deg", err.fixed_rows::<3>(0).norm(), err[8].to_degrees());
    println!("posterior position sigma {:.4} m", up.posterior.cov[(0, 0)].sqrt());
    Ok(())
}
