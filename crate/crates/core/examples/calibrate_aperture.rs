//! Rebuild the integer-aperture threshold table.
//!
//! ```text
//! cargo run --release --example calibrate_aperture -- data/aperture_thresholds.csv [samples]
//! ```

use std::time::Instant;

use tcnav::ambiguity::{calibrate, CalibrationSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "aperture_thresholds.csv".into());
    let mut spec = CalibrationSpec::default();
    if let Some(n) = args.next() {
        spec.samples = n.parse()?;
    }
    let t0 = Instant::now();
    let table = calibrate(&spec);
    table.write_to(std::fs::File::create(&out)?)?;
    eprintln!("{} entries in {:.1} s -> {out}", table.entries.len(), t0.elapsed().as_secs_f64());
    Ok(())
}
