//! Procedural skeletons and walking motion for fixtures, tests and examples.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kinematics::{Axis, Quat};

use crate::error::{io, Result};

use super::bvh::{save_bvh, RawMotion};
use super::clip::{localize_and_clip, MotionClip};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::skeleton::{JointDef, SkeletonDef};

/// Proportions of a generated skeleton.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportions {
    pub limbs: f64,
    pub torso: f64,
}

impl Default for Proportions {
    fn default() -> Self {
        Self { limbs: 1.0, torso: 1.0 }
    }
}

fn mirror(x: [f64; 3], side: f64) -> [f64; 3] {
    [x[0] * side, x[1], x[2]]
}

/// A 19-joint humanoid: hips, four spine/head joints, two 4-joint arms and
/// two 3-joint legs.
pub fn biped(name: &str, p: Proportions) -> Arc<SkeletonDef> {
    let (l, t) = (p.limbs, p.torso);
    let hip_y = 0.05 + 0.87 * l + 0.08;
    let mut j = vec![
        JointDef::new("Hips", None, [0.0, hip_y, 0.0]),
        JointDef::new("Spine", Some(0), [0.0, 0.12 * t, 0.0]),
        JointDef::new("Chest", Some(1), [0.0, 0.15 * t, 0.0]),
        JointDef::new("Neck", Some(2), [0.0, 0.18 * t, 0.0]),
        JointDef::new("Head", Some(3), [0.0, 0.1 * t, 0.0]).with_end_site([0.0, 0.15 * t, 0.0]),
    ];
    for (side, label) in [(1.0, "Left"), (-1.0, "Right")] {
        let s = j.len();
        j.push(JointDef::new(format!("{label}Shoulder"), Some(2), mirror([0.08 * t, 0.14 * t, 0.0], side)));
        j.push(JointDef::new(format!("{label}Arm"), Some(s), mirror([0.12 * t, 0.0, 0.0], side)));
        j.push(JointDef::new(format!("{label}ForeArm"), Some(s + 1), mirror([0.28 * l, 0.0, 0.0], side)));
        j.push(JointDef::new(format!("{label}Hand"), Some(s + 2), mirror([0.25 * l, 0.0, 0.0], side)).with_end_site(mirror([0.08, 0.0, 0.0], side)));
    }
    for (side, label) in [(1.0, "Left"), (-1.0, "Right")] {
        let s = j.len();
        j.push(JointDef::new(format!("{label}UpLeg"), Some(0), mirror([0.1 * t, -0.05, 0.0], side)));
        j.push(JointDef::new(format!("{label}Leg"), Some(s), [0.0, -0.45 * l, 0.0]));
        j.push(JointDef::new(format!("{label}Foot"), Some(s + 1), [0.0, -0.42 * l, 0.0]).with_end_site([0.0, -0.08, 0.12]));
    }
    Arc::new(SkeletonDef::from_joints(name, j).expect("generated biped is valid"))
}

/// A 21-joint quadruped: hips, spine and head along `+z`, four 3- or
/// 4-joint legs and a 2-joint tail. Front legs use arm joint names.
pub fn quadruped(name: &str, p: Proportions) -> Arc<SkeletonDef> {
    let (l, t) = (p.limbs, p.torso);
    let hip_y = 0.1 + 0.6 * l;
    let mut j = vec![
        JointDef::new("Hips", None, [0.0, hip_y, 0.0]),
        JointDef::new("Spine", Some(0), [0.0, 0.02, 0.25 * t]),
        JointDef::new("Chest", Some(1), [0.0, 0.0, 0.25 * t]),
        JointDef::new("Neck", Some(2), [0.0, 0.1, 0.12 * t]),
        JointDef::new("Head", Some(3), [0.0, 0.1, 0.1 * t]).with_end_site([0.0, 0.0, 0.15 * t]),
    ];
    for (side, label) in [(1.0, "Left"), (-1.0, "Right")] {
        let s = j.len();
        j.push(JointDef::new(format!("{label}Shoulder"), Some(2), mirror([0.1 * t, -0.03, 0.0], side)));
        j.push(JointDef::new(format!("{label}Arm"), Some(s), [0.0, -0.02, 0.0]));
        j.push(JointDef::new(format!("{label}ForeArm"), Some(s + 1), [0.0, -0.3 * l, 0.0]));
        j.push(JointDef::new(format!("{label}Hand"), Some(s + 2), [0.0, -0.3 * l, 0.0]).with_end_site([0.0, -0.05, 0.05]));
    }
    for (side, label) in [(1.0, "Left"), (-1.0, "Right")] {
        let s = j.len();
        j.push(JointDef::new(format!("{label}UpLeg"), Some(0), mirror([0.1 * t, -0.05, 0.0], side)));
        j.push(JointDef::new(format!("{label}Leg"), Some(s), [0.0, -0.3 * l, 0.0]));
        j.push(JointDef::new(format!("{label}Foot"), Some(s + 1), [0.0, -0.3 * l, 0.0]).with_end_site([0.0, -0.05, 0.05]));
    }
    j.push(JointDef::new("Tail1", Some(0), [0.0, 0.05, -0.15 * t]));
    j.push(JointDef::new("Tail2", Some(j.len() - 1), [0.0, 0.0, -0.15 * t]).with_end_site([0.0, 0.0, -0.1]));
    Arc::new(SkeletonDef::from_joints(name, j).expect("generated quadruped is valid"))
}

/// A 4-joint biped-like tree: hips, spine and two legs.
pub fn tiny_biped(name: &str, p: Proportions) -> Arc<SkeletonDef> {
    let l = p.limbs;
    let j = vec![
        JointDef::new("Hips", None, [0.0, 0.9 * l, 0.0]),
        JointDef::new("Head", Some(0), [0.0, 0.5 * p.torso, 0.0]).with_end_site([0.0, 0.2, 0.0]),
        JointDef::new("LeftLeg", Some(0), [0.1, -0.45 * l, 0.0]).with_end_site([0.0, -0.45 * l, 0.0]),
        JointDef::new("RightLeg", Some(0), [-0.1, -0.45 * l, 0.0]).with_end_site([0.0, -0.45 * l, 0.0]),
    ];
    Arc::new(SkeletonDef::from_joints(name, j).expect("generated tiny biped is valid"))
}

/// A 6-joint four-legged tree: hips, head and four single-joint legs.
pub fn tiny_quadruped(name: &str, p: Proportions) -> Arc<SkeletonDef> {
    let l = p.limbs;
    let leg = |n: &str, x: f64, z: f64| {
        JointDef::new(n, Some(0), [x, -0.2 * l, z]).with_end_site([0.0, -0.3 * l, 0.0])
    };
    let j = vec![
        JointDef::new("Hips", None, [0.0, 0.6 * l, 0.0]),
        JointDef::new("Head", Some(0), [0.0, 0.2, 0.4 * p.torso]).with_end_site([0.0, 0.0, 0.15]),
        leg("LeftArm", 0.1, 0.3 * p.torso),
        leg("RightArm", -0.1, 0.3 * p.torso),
        leg("LeftLeg", 0.1, -0.3 * p.torso),
        leg("RightLeg", -0.1, -0.3 * p.torso),
    ];
    Arc::new(SkeletonDef::from_joints(name, j).expect("generated tiny quadruped is valid"))
}

/// Gait and trajectory settings for [`walk`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkParams {
    pub frames: usize,
    pub fps: f64,
    /// Root speed in offset units per second.
    pub speed: f64,
    /// Initial heading, radians about `+y` from `+z`.
    pub heading: f64,
    /// Heading change in radians per second.
    pub turn_rate: f64,
    /// Steps per second.
    pub cadence: f64,
    pub phase: f64,
    /// Scales every joint swing.
    pub amplitude: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self { frames: 64, fps: 30.0, speed: 1.2, heading: 0.0, turn_rate: 0.0, cadence: 1.0, phase: 0.0, amplitude: 1.0 }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Hip,
    Knee,
    Shoulder,
    UpperArm,
    Elbow,
    Spine,
    Neck,
    Tail,
    Other,
}

fn role(name: &str) -> (Role, f64) {
    let n = name.to_ascii_lowercase();
    let side = if n.starts_with("left") { 1.0 } else if n.starts_with("right") { -1.0 } else { 0.0 };
    let r = if n.contains("upleg") {
        Role::Hip
    } else if n.contains("leg") {
        Role::Knee
    } else if n.contains("shoulder") {
        Role::Shoulder
    } else if n.contains("forearm") {
        Role::Elbow
    } else if n.contains("arm") {
        Role::UpperArm
    } else if n.contains("spine") || n.contains("chest") {
        Role::Spine
    } else if n.contains("neck") || n.contains("head") {
        Role::Neck
    } else if n.contains("tail") {
        Role::Tail
    } else {
        Role::Other
    };
    (r, side)
}

/// Sinusoidal walk cycle on any skeleton built from the generators above.
///
/// Arms hanging sideways (humanoids) are lowered and counter-swing; arms
/// pointing down (front legs) step in a diagonal gait with the hind legs.
pub fn walk(skeleton: &Arc<SkeletonDef>, w: WalkParams) -> RawMotion {
    // An arm whose bone below points down is a front leg.
    let legged_arm: Vec<bool> = (0..skeleton.num_joints())
        .map(|j| {
            let below = skeleton.children(j).first().map(|&c| skeleton.offsets[c]).or(skeleton.end_sites[j]);
            below.is_some_and(|o| o[1] < -o[0].abs())
        })
        .collect();
    let a = w.amplitude;
    let mut pos = [0.0; 3];
    let mut positions = Vec::with_capacity(w.frames);
    let mut rotations = Vec::with_capacity(w.frames);
    for f in 0..w.frames {
        let s = f as f64 / w.fps;
        let phi = TAU * w.cadence * s + w.phase;
        let yaw = w.heading + w.turn_rate * s;
        if f > 0 {
            let step = w.speed / w.fps;
            pos[0] += step * yaw.sin();
            pos[2] += step * yaw.cos();
        }
        positions.push([pos[0], 0.02 * a * (2.0 * phi).cos(), pos[2]]);
        let mut row = Vec::with_capacity(skeleton.num_joints());
        for (j, name) in skeleton.joint_names.iter().enumerate() {
            let (r, side) = role(name);
            let leg_phase = if side < 0.0 { PI } else { 0.0 };
            let q = match r {
                _ if j == 0 => Quat::from_yaw(yaw).mul(Quat::about(Axis::X, 0.05 * a * (2.0 * phi).sin())),
                Role::Hip => Quat::about(Axis::X, -0.5 * a * (phi + leg_phase).sin()),
                Role::Knee => Quat::about(Axis::X, 0.6 * a * (phi + leg_phase - 0.5 * PI).sin().max(0.0)),
                Role::UpperArm | Role::Elbow if legged_arm[j] => {
                    let p = phi + leg_phase + PI;
                    if r == Role::UpperArm {
                        Quat::about(Axis::X, -0.4 * a * p.sin())
                    } else {
                        Quat::about(Axis::X, -0.5 * a * (p - 0.5 * PI).sin().max(0.0))
                    }
                }
                Role::UpperArm => Quat::about(Axis::Z, -1.2 * side).mul(Quat::about(Axis::Y, 0.4 * a * side * (phi + leg_phase + PI).sin())),
                Role::Elbow => Quat::about(Axis::Y, 0.3 * a * side * (1.0 + (phi + leg_phase).sin())),
                Role::Shoulder => Quat::about(Axis::Z, 0.05 * a * side * phi.sin()),
                Role::Spine => Quat::about(Axis::Y, 0.1 * a * phi.sin()),
                Role::Neck => Quat::about(Axis::X, 0.05 * a * (2.0 * phi).sin()),
                Role::Tail => Quat::about(Axis::Y, 0.3 * a * phi.sin()),
                Role::Other => Quat::IDENTITY,
            };
            row.push(q);
        }
        rotations.push(row);
    }
    RawMotion::new(skeleton.clone(), 1.0 / w.fps, positions, rotations).expect("generated motion is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_skeletons_have_expected_sizes() {
        assert_eq!(biped("b", Proportions::default()).num_joints(), 19);
        assert_eq!(quadruped("q", Proportions::default()).num_joints(), 21);
        assert_eq!(tiny_biped("t", Proportions::default()).num_joints(), 4);
        assert_eq!(tiny_quadruped("t", Proportions::default()).num_joints(), 6);
    }

    #[test]
    fn walk_moves_forward_and_stays_unit() {
        let s = biped("b", Proportions::default());
        let m = walk(&s, WalkParams::default());
        assert_eq!(m.frames(), 64);
        assert!(m.root_positions[63][2] > 2.0);
        for q in m.rotations.iter().flatten() {
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }
}

/// `count` seeded walk settings varying speed, heading, turning, cadence,
/// phase and amplitude.
pub fn random_walks(count: usize, frames: usize, fps: f64, seed: u64) -> Vec<WalkParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| WalkParams {
            frames,
            fps,
            speed: rng.gen_range(0.6..1.8),
            heading: rng.gen_range(-PI..PI),
            turn_rate: rng.gen_range(-0.6..0.6),
            cadence: rng.gen_range(0.8..1.4),
            phase: rng.gen_range(0.0..TAU),
            amplitude: rng.gen_range(0.7..1.2),
        })
        .collect()
}

/// `count` walking clips of `frames` frames at 30 fps from [`random_walks`].
pub fn walk_clips(skeleton: &Arc<SkeletonDef>, count: usize, frames: usize, seed: u64) -> Vec<MotionClip> {
    random_walks(count, frames, 30.0, seed)
        .into_iter()
        .map(|w| {
            let clips = localize_and_clip(&walk(skeleton, w), frames, 30).expect("generated walk fits one clip");
            clips.into_iter().next().expect("one clip")
        })
        .collect()
}

/// Layout of a corpus written by [`write_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusSpec<'a> {
    pub structure_id: &'a str,
    pub skeletons: &'a [Arc<SkeletonDef>],
    pub motions: usize,
    /// Frames per file at `source_fps`.
    pub frames: usize,
    pub source_fps: f64,
    /// Target rate written to the manifest.
    pub fps: u32,
    /// Every `test_every`-th motion goes to the test split.
    pub test_every: usize,
    pub seed: u64,
}

/// Writes one BVH per motion and skeleton under `dir/<skeleton>/` plus
/// `dir/manifest.toml`, and returns the manifest path.
///
/// Motion `i` is `walk_<i>.bvh` with the same gait on every skeleton, so
/// corpora written with the same seed pair up by file stem.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec<'_>) -> Result<PathBuf> {
    let walks = random_walks(spec.motions, spec.frames, spec.source_fps, spec.seed);
    let mut manifest = DatasetManifest { structure_id: spec.structure_id.to_string(), fps: spec.fps, files: Vec::new() };
    for skel in spec.skeletons {
        for (i, w) in walks.iter().enumerate() {
            let rel = PathBuf::from(&skel.name).join(format!("walk_{i:02}.bvh"));
            save_bvh(&dir.join(&rel), &walk(skel, *w))?;
            let split = if spec.test_every > 0 && i % spec.test_every == spec.test_every - 1 { Split::Test } else { Split::Train };
            manifest.files.push(ManifestEntry { path: rel, split });
        }
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()).map_err(|e| io(&path, e))?;
    Ok(path)
}
