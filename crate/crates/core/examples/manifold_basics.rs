//! Attitude chart and state increments.

use nalgebra::Vector3;
use tcnav::manifold::{exp_map, log_map, NavState, Vec15};

fn main() -> tcnav::error::Result<()> {
    let angles = Vector3::new(0.1, -0.2, 2.5);
    let r = exp_map(&angles);
    println!("Exp{angles:?} =\n{r:.6}");
    println!("Log(Exp(t)) = {:?}", log_map(&r)?);

    let x = NavState { att: r, pos: Vector3::new(1.0, 2.0, 3.0), ..Default::default() };
    let mut d = Vec15::zeros();
    d[0] = 0.5;
    d[8] = 0.3; // yaw increment
    let y = x.oplus(&d);
    println!("(x + d) - x = {:?}", y.ominus(&x)?.as_slice());

    // the middle angle is bounded; its gimbal condition is rejected
    let locked = exp_map(&Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
    println!("Log at gimbal lock: {:?}", log_map(&locked).err());
    Ok(())
}
