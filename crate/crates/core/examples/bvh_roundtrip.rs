//! Parses BVH text with mixed Euler orders, writes it back, and cuts the
//! motion into normalized clips.
//!
//! ```text
//! cargo run --example bvh_roundtrip [file.bvh]
//! ```

use std::path::Path;

use partret::motion_io::synthetic::{biped, walk, Proportions, WalkParams};
use partret::motion_io::{localize_and_clip, parse_bvh, parse_bvh_str, write_bvh, NormStats};

const MIXED: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0.9 0
  CHANNELS 6 Xposition Yposition Zposition Yrotation Xrotation Zrotation
  JOINT Spine
  {
    OFFSET 0 0.3 0
    CHANNELS 3 Xrotation Zrotation Yrotation
    End Site
    {
      OFFSET 0 0.3 0
    }
  }
}
MOTION
Frames: 3
Frame Time: 0.0333333
0 0.9 0 10 0 0 5 0 0
0 0.9 0.05 20 1 0 10 2 0
0 0.9 0.1 30 2 0 15 4 0
";

fn main() -> partret::Result<()> {
    let (skel, raw) = match std::env::args().nth(1) {
        Some(path) => parse_bvh(Path::new(&path))?,
        None => parse_bvh_str(MIXED, "mixed")?,
    };
    println!("{}: {} joints, {} frames at {:.1} fps, height {:.3}", skel.name, skel.num_joints(), raw.frames(), raw.fps(), skel.height);
    for (name, ch) in skel.joint_names.iter().zip(&skel.channels) {
        let ch: Vec<String> = ch.iter().map(|c| c.name()).collect();
        println!("  {name:<12} {}", ch.join(" "));
    }

    let text = write_bvh(&raw)?;
    let (_, again) = parse_bvh_str(&text, "again")?;
    let worst = raw
        .rotations
        .iter()
        .flatten()
        .zip(again.rotations.iter().flatten())
        .map(|(a, b)| 1.0 - a.dot(*b).abs())
        .fold(0.0, f64::max);
    println!("write/parse round trip: worst 1 - |<q, q'>| = {worst:.2e}");

    // A longer synthetic walk at 60 fps, decimated to 30 fps clips.
    let body = biped("walker", Proportions::default());
    let motion = walk(&body, WalkParams { frames: 300, fps: 60.0, ..WalkParams::default() });
    let clips = localize_and_clip(&motion, 64, 30)?;
    println!("300 frames at 60 fps -> {} clips of 64 frames at 30 fps", clips.len());
    let stats = NormStats::compute(&clips)?;
    let normalized = stats.apply(&clips[0])?;
    let back = stats.invert(&normalized)?;
    println!("normalization round trip error {:.2e}", back.data.max_abs_diff(&clips[0].data));
    println!("mean root speed of clip 0: {:.3} units/frame", clips[0].mean_speed());
    Ok(())
}
