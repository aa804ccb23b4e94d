//! Pseudorange innovation screening with a biased satellite.

use nalgebra::Vector3;
use tcnav::ambiguity::substream;
use tcnav::cdgnss::{linearize_ukf, AntennaGeometry, NoiseModelParams};
use tcnav::ins::diagonal_cov;
use tcnav::integrity::reject_pseudorange_outliers;
use tcnav::manifold::{Belief, NavState};
use tcnav::sim::{apply_faults, synth_epoch, Constellation, Fault};
use tcnav::ut::UtParams;

fn main() -> tcnav::error::Result<()> {
    let constellation = Constellation::ten();
    let sats = constellation.satellite_set()?;
    let geom = AntennaGeometry::default();
    let truth = NavState::default();
    let belief = Belief::new(truth.clone(), diagonal_cov(0.02, 0.05, Vector3::new(0.01, 0.01, 0.02), 0.0, 0.0));
    let lin = linearize_ukf(&belief, &geom, &UtParams::default())?;
    for sat in [2u32, 3, 8] {
        let (mut a, mut b) = (substream(sat as u64, 0), substream(sat as u64, 1));
        let (ep, _) = synth_epoch(&truth, 0.0, &sats, &geom, &NoiseModelParams::default(), 1.0, 50, (&mut a, &mut b))?;
        let ep = apply_faults(ep, &[Fault::PseudorangeBias { sat, bias: 15.0, start: 0.0, end: 1.0 }])?.expect("no outage");
        let s = reject_pseudorange_outliers(&belief, &ep, &lin, 1.5)?;
        let worst = s.statistics.iter().cloned().fold(0.0, f64::max);
        println!(
            "+15 m on sat {sat} (el {:>4.1} deg): excluded {:?}, largest q {worst:.1}, {} channels left",
            constellation.elevations_deg[sat as usize - 1],
            s.excluded,
            s.epoch.sats.n_channels()
        );
    }
    Ok(())
}
