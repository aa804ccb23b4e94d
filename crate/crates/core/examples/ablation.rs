//! Switch features off one at a time on the same simulated record.

use tcnav::config::RunConfig;
use tcnav::pipeline::ablate;
use tcnav::sim::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario { duration: 120.0, ..Scenario::default() };
    let cfg = RunConfig::default();
    println!("{:<24} {:>8} {:>8} {:>9} {:>8}", "variant", "fix", "p95_h", "yaw_rms", "resets");
    for (name, s) in ablate(&sc, &cfg, &cfg.table()?)? {
        println!(
            "{name:<24} {:>8.3} {:>8.4} {:>9.4} {:>8}",
            s.fix_availability, s.horizontal_p95, s.attitude_rmse_deg[2], s.resets
        );
    }
    Ok(())
}
