//! Forward kinematics of a localized clip, and the root trajectory it
//! integrates back to.

use partret::kinematics::{fk_clip, integrate_root_clip};
use partret::motion_io::synthetic::{quadruped, walk, Proportions, WalkParams};
use partret::motion_io::localize_and_clip;

fn main() -> partret::Result<()> {
    let skel = quadruped("dog", Proportions::default());
    let w = WalkParams { frames: 64, turn_rate: 0.5, ..WalkParams::default() };
    let raw = walk(&skel, w);
    let clip = localize_and_clip(&raw, 64, 30)?.remove(0);

    let pos = fk_clip(&clip)?;
    println!("{} joints x {} frames", pos.joints(), pos.frames());
    for &f in &skel.feet() {
        let y: Vec<f64> = (0..pos.frames()).map(|t| pos.get(0, t, f)[1]).collect();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("  foot {:<10} height {lo:.3} .. {hi:.3}", skel.joint_names[f]);
    }

    // The clip starts at the origin facing +z; compare displacements with
    // the raw trajectory rotated into that frame.
    let (traj, yaw) = integrate_root_clip(&clip);
    let last = traj[traj.len() - 1];
    let travelled = (last[0] * last[0] + last[2] * last[2]).sqrt();
    let (a, b) = (raw.root_positions[0], raw.root_positions[63]);
    let expected = ((b[0] - a[0]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
    println!("root travelled {travelled:.4} (raw {expected:.4}), turned {:.3} rad", yaw[yaw.len() - 1]);
    Ok(())
}
