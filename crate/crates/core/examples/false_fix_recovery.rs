//! Windowed phase-NIS detection and soft reset after an induced false fix.
//!
//! ```text
//! cargo run --release --example false_fix_recovery [scenario.json]
//! ```

use tcnav::config::{load_scenario, RunConfig};
use tcnav::pipeline::run_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/false_fix.json".into());
    let sc = load_scenario(path.as_ref())?;
    let on = RunConfig::default();
    let mut off = on.clone();
    off.integrity.false_fix_detection = false;
    let table = on.table()?;
    for (label, cfg) in [("detection on", &on), ("detection off", &off)] {
        let out = run_scenario(&sc, cfg, &table)?;
        println!("{label}:");
        for r in out.reports.iter().filter(|r| r.t >= 59.0 && r.t <= 64.0 || r.alarm) {
            println!(
                "  t {:>6.1} {:<7} err {:>6.3} m{}{}",
                r.t,
                r.status,
                r.err_3d,
                if r.wrong_integers { "  wrong integers" } else { "" },
                if r.alarm { "  ALARM -> reset" } else { "" }
            );
        }
        let late = out.reports.iter().filter(|r| r.t > 80.0).map(|r| r.err_3d).fold(0.0, f64::max);
        println!("  max error after 80 s: {late:.3} m, resets {}\n", out.summary.resets);
    }
    Ok(())
}
