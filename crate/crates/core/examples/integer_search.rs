//! Integer least squares with decorrelation, then the fixed-failure-rate
//! aperture test against the shipped threshold table.

use tcnav::ambiguity::{aperture_test, ils_search, sample_problem, substream, ApertureTable, K_BEST};

fn main() -> tcnav::error::Result<()> {
    let table = ApertureTable::builtin();
    let p_f = 0.001;
    let draws = 2000;
    let mut rng = substream(1, 0);
    println!("{:>4} {:>9} {:>10} {:>9} {:>10}", "dof", "strength", "ILS right", "fixed", "wrong fix");
    for (dof, strength) in [(4, 1.2), (4, 3.0), (8, 3.0), (14, 1.5), (14, 6.0)] {
        let (mut right, mut fixed, mut wrong) = (0, 0, 0);
        for _ in 0..draws {
            let p = sample_problem(&mut rng, dof, strength);
            let sol = ils_search(&p, K_BEST)?;
            // the simulated truth is the zero vector
            let ok = sol.best().n.iter().all(|&v| v == 0);
            right += ok as usize;
            if aperture_test(&sol, dof, p.strength(), p_f, table)?.accepted {
                fixed += 1;
                wrong += !ok as usize;
            }
        }
        let pct = |k: usize| 100.0 * k as f64 / draws as f64;
        println!("{dof:>4} {strength:>9.1} {:>9.1}% {:>8.1}% {:>9.2}%", pct(right), pct(fixed), pct(wrong));
    }
    println!("target failure rate {:.1}%", 100.0 * p_f);
    Ok(())
}
