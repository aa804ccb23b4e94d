//! Success, failure and float rates of the single-epoch fix against the
//! heading prior width.
//!
//! ```text
//! cargo run --release --example linearization_montecarlo [trials]
//! ```

use tcnav::ambiguity::ApertureTable;
use tcnav::montecarlo::{run_monte_carlo, MonteCarloSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let spec = MonteCarloSpec { trials, ..MonteCarloSpec::default() };
    let rows = run_monte_carlo(&spec, ApertureTable::builtin())?;
    println!("{:>7} {:<14} {:>7} {:>7} {:>7}", "yaw", "method", "P_s", "P_f", "P_u");
    for r in &rows {
        println!("{:>7.1} {:<14} {:>7.4} {:>7.4} {:>7.4}", r.sigma_yaw_deg, r.method.name(), r.p_success, r.p_fail, r.p_float);
    }
    Ok(())
}
