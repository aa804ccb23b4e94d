//! Full filter over a simulated urban drive; per-epoch CSV on stdout's side.
//!
//! ```text
//! cargo run --release --example urban_run -- [scenario.json] [out.csv]
//! ```

use tcnav::config::{load_scenario, RunConfig};
use tcnav::pipeline::{run_scenario, write_reports};
use tcnav::sim::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let sc = match args.next() {
        Some(p) => load_scenario(p.as_ref())?,
        None => Scenario { duration: 120.0, ..Scenario::default() },
    };
    let cfg = RunConfig::default();
    let out = run_scenario(&sc, &cfg, &cfg.table()?)?;
    if let Some(path) = args.next() {
        write_reports(&out.reports, std::fs::File::create(path)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(())
}
