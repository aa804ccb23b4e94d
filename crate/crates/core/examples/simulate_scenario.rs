//! What the simulator produces for a scenario: truth, IMU stream and DD epochs.
//!
//! ```text
//! cargo run --release --example simulate_scenario -- [imu.csv epochs.csv]
//! ```

use tcnav::cdgnss::{AntennaGeometry, NoiseModelParams};
use tcnav::sim::{scenario_imu, simulate, write_epochs_csv, write_imu_csv, Fault, Scenario};
use tcnav::vdc::VdcParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario {
        duration: 60.0,
        faults: vec![Fault::Outage { start: 20.0, end: 25.0 }],
        ..Scenario::default()
    };
    let sim = simulate(&sc, &AntennaGeometry::default(), &VdcParams::default(), &NoiseModelParams::default(), &scenario_imu(&sc))?;
    let outages = sim.epochs.iter().filter(|e| e.1.is_none()).count();
    let last = sim.truth.states.last().expect("non-empty truth");
    println!("{} IMU samples, {} GNSS epochs ({outages} in outage)", sim.imu.len(), sim.epochs.len());
    println!("end position {:.1?} m, speed {:.2} m/s", last.pos.as_slice(), last.vel.norm());
    if let Some((_, Some(ep), n)) = sim.epochs.first() {
        println!("{} DD rows over {} channels, first integers {:?}", ep.z.len(), ep.sats.n_channels(), &n.as_slice()[..4]);
    }
    let mut args = std::env::args().skip(1);
    if let (Some(imu), Some(epochs)) = (args.next(), args.next()) {
        write_imu_csv(&sim.imu, std::fs::File::create(imu)?)?;
        write_epochs_csv(&sim.epochs, std::fs::File::create(epochs)?)?;
    }
    Ok(())
}
