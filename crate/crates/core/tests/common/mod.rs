#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use partret::body_parts::BodyPartition;
use partret::motion_io::synthetic::{tiny_biped, tiny_quadruped, walk_clips, Proportions};
use partret::motion_io::{JointDef, SkeletonDef};
use partret::networks::NetConfig;
use partret::training::{LossWeights, Mode, StructureData, TrainConfig};
use rand::Rng;

/// Fresh scratch directory under the target temp dir.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("partret-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Random tree with parents preceding children.
pub fn random_tree(joints: usize, rng: &mut impl Rng) -> Arc<SkeletonDef> {
    let defs = (0..joints)
        .map(|k| {
            let parent = (k > 0).then(|| rng.gen_range(0..k));
            let offset = if k == 0 {
                [0.0, rng.gen_range(0.5..1.5), 0.0]
            } else {
                [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]
            };
            JointDef::new(format!("j{k}"), parent, offset)
        })
        .collect();
    Arc::new(SkeletonDef::from_joints("random", defs).unwrap())
}

/// Random partition of `joints` into `parts` nonempty parts; some joints
/// may be left out.
pub fn random_partition(joints: usize, parts: usize, rng: &mut impl Rng) -> BodyPartition {
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for j in 0..joints {
        if j < parts {
            sets[j].push(j);
        } else if rng.gen_bool(0.85) {
            let k = rng.gen_range(0..parts);
            sets[k].push(j);
            if rng.gen_bool(0.2) {
                let other = rng.gen_range(0..parts);
                if other != k {
                    sets[other].push(j);
                }
            }
        }
    }
    let names = (0..parts).map(|k| format!("p{k}")).collect();
    BodyPartition::new(names, sets, joints).unwrap()
}

pub type Q = [f64; 4];

pub fn qmul(a: Q, b: Q) -> Q {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn qrot(q: Q, v: [f64; 3]) -> [f64; 3] {
    let p = qmul(qmul(q, [0.0, v[0], v[1], v[2]]), [q[0], -q[1], -q[2], -q[3]]);
    [p[1], p[2], p[3]]
}

pub fn random_unit_quat(rng: &mut impl Rng) -> Q {
    loop {
        let q: Q = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

/// Two tiny structures with two parts each, used by the gradient check
/// and the overfit run.
pub fn tiny_pair(clips: usize, frames: usize) -> [StructureData; 2] {
    let a = tiny_biped("a", Proportions::default());
    let b = tiny_quadruped("b", Proportions::default());
    let body = |s: &SkeletonDef, legs: &[&str]| {
        let idx = |n: &str| s.joint_index(n).unwrap();
        BodyPartition::new(
            vec!["body".into(), "legs".into()],
            vec![vec![idx("Hips"), idx("Head")], legs.iter().map(|n| idx(n)).collect()],
            s.num_joints(),
        )
        .unwrap()
    };
    let pa = body(&a, &["LeftLeg", "RightLeg"]);
    let pb = body(&b, &["LeftArm", "RightArm", "LeftLeg", "RightLeg"]);
    [
        StructureData::new("A", walk_clips(&a, clips, frames, 1), pa).unwrap(),
        StructureData::new("B", walk_clips(&b, clips, frames, 2), pb).unwrap(),
    ]
}

pub fn tiny_config(mode: Mode, batch_size: usize) -> TrainConfig {
    TrainConfig { mode, batch_size, net: NetConfig::tiny(), weights: LossWeights::default(), ..TrainConfig::default() }
}

/// BVH text for `skeleton`-shaped data with per-joint Euler orders and
/// random angles (degrees) and root positions.
pub fn bvh_text(orders: &[&str], frames: usize, root_position_last: bool, rng: &mut impl Rng) -> String {
    let mut s = String::from("HIERARCHY\n");
    let j = orders.len();
    for (k, order) in orders.iter().enumerate() {
        let pad = "  ".repeat(k);
        let rot: Vec<String> = order.chars().map(|c| format!("{c}rotation")).collect();
        if k == 0 {
            let pos = "Xposition Yposition Zposition";
            let ch = if root_position_last { format!("{} {pos}", rot.join(" ")) } else { format!("{pos} {}", rot.join(" ")) };
            let _ = writeln!(s, "ROOT j0\n{{\n  OFFSET 0.000000 1.000000 0.000000\n  CHANNELS 6 {ch}");
        } else {
            let _ = writeln!(s, "{pad}JOINT j{k}\n{pad}{{\n{pad}  OFFSET 0.000000 0.250000 0.100000\n{pad}  CHANNELS 3 {}", rot.join(" "));
        }
    }
    let pad = "  ".repeat(j);
    let _ = writeln!(s, "{pad}End Site\n{pad}{{\n{pad}  OFFSET 0.000000 0.200000 0.000000\n{pad}}}");
    for k in (0..j).rev() {
        let _ = writeln!(s, "{}}}", "  ".repeat(k));
    }
    let _ = writeln!(s, "MOTION\nFrames: {frames}\nFrame Time: 0.03333333");
    for _ in 0..frames {
        let mut vals = Vec::new();
        for k in 0..j {
            let angles: Vec<f64> = (0..3).map(|_| rng.gen_range(-170.0..170.0)).collect();
            let pos: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if k == 0 && !root_position_last {
                vals.extend(pos.iter().copied());
            }
            vals.extend(angles);
            if k == 0 && root_position_last {
                vals.extend(pos);
            }
        }
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}
