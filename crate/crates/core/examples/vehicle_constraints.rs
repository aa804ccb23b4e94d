//! Non-holonomic and zero-velocity pseudo-measurements on a drifting belief.

use nalgebra::Vector3;
use tcnav::ins::diagonal_cov;
use tcnav::manifold::{Belief, NavState, VEL};
use tcnav::ut::UtParams;
use tcnav::vdc::{nhc_update, zupt_update, VdcParams};

fn main() -> tcnav::error::Result<()> {
    let p = VdcParams::default();
    let ut = UtParams::MOMENT_MATCHED;
    let moving = Belief::new(
        NavState { vel: Vector3::new(12.0, 0.4, -0.1), ..Default::default() },
        diagonal_cov(0.5, 0.5, Vector3::repeat(0.01), 1e-3, 1e-5),
    );
    let after = nhc_update(&moving, &Vector3::new(0.0, 0.0, 0.05), &p, &Vector3::zeros(), &ut)?;
    let sd = |b: &Belief, i: usize| b.cov[(VEL + i, VEL + i)].sqrt();
    println!("NHC: lateral velocity {:.3} -> {:.3} m/s, sigma {:.3} -> {:.3}", moving.mean.vel.y, after.mean.vel.y, sd(&moving, 1), sd(&after, 1));

    let parked = Belief::new(
        NavState { vel: Vector3::new(0.03, -0.02, 0.01), ..Default::default() },
        diagonal_cov(0.5, 0.1, Vector3::repeat(0.01), 1e-3, 1e-5),
    );
    let z = zupt_update(&parked, &Vector3::zeros(), &p, &Vector3::zeros(), &ut)?;
    println!("ZUPT applied {} (NIS {:.2} < {:.1}), speed {:.4} -> {:.4} m/s", z.applied, z.nis, z.threshold, parked.mean.vel.norm(), z.belief.mean.vel.norm());
    let z = zupt_update(&moving, &Vector3::zeros(), &p, &Vector3::zeros(), &ut)?;
    println!("ZUPT on a moving belief applied {} (NIS {:.0})", z.applied, z.nis);
    Ok(())
}
