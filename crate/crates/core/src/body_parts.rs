//! Body-part partitions, the attention mask built from them and joint
//! positional encodings.
//!
//! Attention rows are laid out tokens first: `N` part tokens, then the `J`
//! joints, then the root-velocity pseudo-joint at joint index `J`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use partret_autograd::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io, Error, Result};
use crate::motion_io::SkeletonDef;

/// Mask value for blocked attention entries; `exp` of it underflows to 0.
pub const MASK_SENTINEL: f64 = -1e9;

/// Names of the compiled-in partitions.
pub const PRESETS: [&str; 2] = ["humanoid6", "biped-quad3"];

/// `N` named joint sets over one skeleton. Every part also holds the
/// velocity pseudo-joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyPartition {
    pub part_names: Vec<String>,
    /// Sorted joint indices per part, each ending with the velocity index.
    pub parts: Vec<Vec<usize>>,
    pub num_joints: usize,
}

impl BodyPartition {
    /// Builds a partition from joint index sets that exclude the velocity
    /// pseudo-joint; it is appended to every part.
    pub fn new(part_names: Vec<String>, joint_sets: Vec<Vec<usize>>, num_joints: usize) -> Result<BodyPartition> {
        if part_names.len() != joint_sets.len() {
            return Err(Error::Config(format!("{} part names for {} parts", part_names.len(), joint_sets.len())));
        }
        if part_names.is_empty() {
            return Err(Error::Config("a partition needs at least one part".into()));
        }
        let mut parts = Vec::with_capacity(joint_sets.len());
        for (name, set) in part_names.iter().zip(joint_sets) {
            let mut set: Vec<usize> = set.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
            if set.is_empty() {
                return Err(Error::EmptyPart(name.clone()));
            }
            if let Some(&bad) = set.iter().find(|&&j| j >= num_joints) {
                return Err(Error::UnknownJoint { part: name.clone(), joint: format!("#{bad}") });
            }
            set.push(num_joints);
            parts.push(set);
        }
        Ok(BodyPartition { part_names, parts, num_joints })
    }

    /// Resolves joint names against `skeleton`.
    pub fn from_names(part_names: Vec<String>, joints: &[Vec<String>], skeleton: &SkeletonDef) -> Result<BodyPartition> {
        let sets = part_names
            .iter()
            .zip(joints)
            .map(|(part, names)| {
                names
                    .iter()
                    .map(|n| skeleton.joint_index(n).ok_or_else(|| Error::UnknownJoint { part: part.clone(), joint: n.clone() }))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        BodyPartition::new(part_names, sets, skeleton.num_joints())
    }

    /// One of [`PRESETS`], resolved by joint-name keywords.
    pub fn preset(name: &str, skeleton: &SkeletonDef) -> Result<BodyPartition> {
        let kinds: Vec<JointKind> = skeleton.joint_names.iter().enumerate().map(|(j, n)| classify(j, n)).collect();
        let part = |f: &dyn Fn(JointKind) -> bool| (0..kinds.len()).filter(|&j| f(kinds[j])).collect::<Vec<_>>();
        let (names, sets): (Vec<&str>, Vec<Vec<usize>>) = match name {
            "humanoid6" => (
                vec!["head", "spine", "left_arm", "right_arm", "left_leg", "right_leg"],
                vec![
                    part(&|k| k == JointKind::Head),
                    part(&|k| k == JointKind::Spine),
                    part(&|k| k == JointKind::Arm(Side::Left)),
                    part(&|k| k == JointKind::Arm(Side::Right)),
                    part(&|k| k == JointKind::Leg(Side::Left)),
                    part(&|k| k == JointKind::Leg(Side::Right)),
                ],
            ),
            "biped-quad3" => {
                let four_legged = front_limbs_reach_ground(skeleton, &kinds);
                (
                    vec!["head", "spine", "legs"],
                    vec![
                        part(&|k| k == JointKind::Head),
                        part(&|k| k == JointKind::Spine),
                        part(&|k| matches!(k, JointKind::Leg(_)) || four_legged && matches!(k, JointKind::Arm(_))),
                    ],
                )
            }
            other => return Err(Error::Config(format!("unknown partition preset `{other}`"))),
        };
        BodyPartition::new(names.into_iter().map(String::from).collect(), sets, skeleton.num_joints())
    }

    /// Number of parts `N`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn vel_index(&self) -> usize {
        self.num_joints
    }

    /// Real joints of part `k` (velocity excluded).
    pub fn joints_of(&self, k: usize) -> &[usize] {
        let p = &self.parts[k];
        &p[..p.len() - 1]
    }

    pub fn contains(&self, k: usize, joint: usize) -> bool {
        self.parts[k].binary_search(&joint).is_ok()
    }

    /// Joints in at least one part, plus the velocity index.
    pub fn covered(&self) -> BTreeSet<usize> {
        self.parts.iter().flatten().copied().collect()
    }

    /// Stable digest of part names and joint sets.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.num_joints.to_le_bytes());
        for (name, set) in self.part_names.iter().zip(&self.parts) {
            h.update(name.as_bytes());
            h.update([0]);
            for j in set {
                h.update((*j as u64).to_le_bytes());
            }
            h.update([1]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JointKind {
    Head,
    Spine,
    Arm(Side),
    Leg(Side),
    Other,
}

fn classify(index: usize, raw: &str) -> JointKind {
    let base = raw.rsplit(':').next().unwrap_or(raw);
    let n = base.to_ascii_lowercase();
    if index == 0 {
        return JointKind::Spine;
    }
    let has = |words: &[&str]| words.iter().any(|w| n.contains(w));
    let side = if n.starts_with("left") || n.starts_with("l_") || n.ends_with("_l") || n.ends_with(".l") {
        Some(Side::Left)
    } else if n.starts_with("right") || n.starts_with("r_") || n.ends_with("_r") || n.ends_with(".r") {
        Some(Side::Right)
    } else {
        None
    };
    if has(&["tail"]) {
        JointKind::Other
    } else if has(&["shoulder", "clavicle", "collar", "arm", "elbow", "hand", "wrist", "finger", "thumb"]) {
        side.map_or(JointKind::Other, JointKind::Arm)
    } else if has(&["upleg", "thigh", "leg", "knee", "foot", "ankle", "toe", "shin", "calf", "hip"]) && !has(&["hips"]) {
        side.map_or(JointKind::Other, JointKind::Leg)
    } else if has(&["head", "neck", "jaw"]) {
        JointKind::Head
    } else if has(&["spine", "chest", "pelvis", "hips", "torso", "abdomen", "waist", "back"]) {
        JointKind::Spine
    } else {
        JointKind::Other
    }
}

/// True when the arm chains (end sites included) end below half the root height at rest, i.e.
/// the skeleton stands on its front limbs.
fn front_limbs_reach_ground(skeleton: &SkeletonDef, kinds: &[JointKind]) -> bool {
    let rest = skeleton.rest_positions();
    let arm_tips: Vec<usize> = skeleton
        .end_effectors
        .iter()
        .copied()
        .filter(|&j| matches!(kinds[j], JointKind::Arm(_)))
        .collect();
    let tip_y = |j: usize| rest[j][1] + skeleton.end_sites[j].map_or(0.0, |e| e[1]);
    !arm_tips.is_empty() && arm_tips.iter().all(|&j| tip_y(j) < 0.5 * rest[0][1])
}

/// Partition file: part order plus, per structure, part name to joint names.
///
/// ```toml
/// parts = ["head", "spine", "legs"]
///
/// [structures.biped]
/// head = ["Neck", "Head"]
/// spine = ["Hips", "Spine"]
/// legs = ["LeftUpLeg", "LeftLeg", "RightUpLeg", "RightLeg"]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub parts: Vec<String>,
    pub structures: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl PartitionConfig {
    pub fn from_toml(text: &str) -> Result<PartitionConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, structure_id: &str, skeleton: &SkeletonDef) -> Result<BodyPartition> {
        let table = self
            .structures
            .get(structure_id)
            .ok_or_else(|| Error::Config(format!("partition has no entry for structure `{structure_id}`")))?;
        if let Some(extra) = table.keys().find(|k| !self.parts.contains(k)) {
            return Err(Error::Config(format!("structure `{structure_id}` names undeclared part `{extra}`")));
        }
        let joints: Vec<Vec<String>> = self.parts.iter().map(|p| table.get(p).cloned().unwrap_or_default()).collect();
        BodyPartition::from_names(self.parts.clone(), &joints, skeleton)
    }
}

/// Where a partition comes from: a preset name or a TOML file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum PartitionSource {
    Preset(String),
    File(PathBuf),
}

impl From<String> for PartitionSource {
    fn from(s: String) -> Self {
        if PRESETS.contains(&s.as_str()) {
            PartitionSource::Preset(s)
        } else {
            PartitionSource::File(PathBuf::from(s))
        }
    }
}

impl From<PartitionSource> for String {
    fn from(s: PartitionSource) -> String {
        s.to_string()
    }
}

impl fmt::Display for PartitionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionSource::Preset(p) => f.write_str(p),
            PartitionSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Loads and validates the partition for one structure.
pub fn load_partition(source: &PartitionSource, structure_id: &str, skeleton: &SkeletonDef) -> Result<BodyPartition> {
    match source {
        PartitionSource::Preset(name) => BodyPartition::preset(name, skeleton),
        PartitionSource::File(path) => load_partition_file(path, structure_id, skeleton),
    }
}

fn load_partition_file(path: &Path, structure_id: &str, skeleton: &SkeletonDef) -> Result<BodyPartition> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    PartitionConfig::from_toml(&text)
        .and_then(|c| c.resolve(structure_id, skeleton))
        .map_err(|e| e.context(path.display().to_string()))
}

/// Additive attention mask over `N + J + 1` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix {
    pub n_tokens: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

impl MaskMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn is_open(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0.0
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::new([self.size, self.size], self.data.clone())
    }
}

/// Builds the mask for `partition`.
///
/// A token sees itself and the joints of its part; with `token_self_only`
/// off it also sees the other tokens. Two joints see each other when they
/// share a part. A joint outside every part sees only itself.
pub fn build_mask(partition: &BodyPartition, token_self_only: bool) -> MaskMatrix {
    let n = partition.len();
    let size = n + partition.num_joints + 1;
    let mut data = vec![MASK_SENTINEL; size * size];
    let mut open = |i: usize, j: usize| {
        data[i * size + j] = 0.0;
        data[j * size + i] = 0.0;
    };
    for k in 0..n {
        for k2 in 0..n {
            if k == k2 || !token_self_only {
                open(k, k2);
            }
        }
        for &a in &partition.parts[k] {
            open(k, n + a);
            for &b in &partition.parts[k] {
                open(n + a, n + b);
            }
        }
    }
    for j in 0..=partition.num_joints {
        open(n + j, n + j);
    }
    MaskMatrix { n_tokens: n, size, data }
}

/// Sinusoidal encoding of joint index `j`: `sin` on even and `cos` on odd
/// entries, with frequency `basis^(-2i/d)`.
pub fn positional_encoding(j: usize, d: usize, basis: f64) -> Result<Vec<f64>> {
    if d < 2 || d % 2 != 0 {
        return Err(Error::OddDim(d));
    }
    let mut out = vec![0.0; d];
    for i in 0..d / 2 {
        let angle = j as f64 / basis.powf(2.0 * i as f64 / d as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Encodings for rows `0..rows`, as `[rows, d]`.
pub fn positional_table(rows: usize, d: usize, basis: f64) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows * d);
    for j in 0..rows {
        data.extend(positional_encoding(j, d, basis)?);
    }
    Ok(Tensor::new([rows, d], data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::synthetic::{biped, quadruped, tiny_quadruped, Proportions};

    #[test]
    fn single_part_mask_is_open() {
        let p = BodyPartition::new(vec!["all".into()], vec![vec![0, 1, 2]], 3).unwrap();
        assert!(build_mask(&p, true).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_disjoint_parts_by_hand() {
        let p = BodyPartition::new(vec!["a".into(), "b".into()], vec![vec![0], vec![1]], 2).unwrap();
        let m = build_mask(&p, true);
        // rows: t0 t1 j0 j1 vel
        let o = 0.0;
        let x = MASK_SENTINEL;
        let expect = [
            [o, x, o, x, o],
            [x, o, x, o, o],
            [o, x, o, x, o],
            [x, o, x, o, o],
            [o, o, o, o, o],
        ];
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.get(i, j), expect[i][j], "({i}, {j})");
            }
        }
    }

    #[test]
    fn humanoid_preset_covers_six_parts() {
        let s = biped("b", Proportions::default());
        let p = BodyPartition::preset("humanoid6", &s).unwrap();
        assert_eq!(p.len(), 6);
        for k in 0..6 {
            assert!(p.contains(k, s.num_joints()));
        }
        let names = |k: usize| p.joints_of(k).iter().map(|&j| s.joint_names[j].as_str()).collect::<Vec<_>>();
        assert_eq!(names(0), ["Neck", "Head"]);
        assert_eq!(names(1), ["Hips", "Spine", "Chest"]);
        assert_eq!(names(4), ["LeftUpLeg", "LeftLeg", "LeftFoot"]);
    }

    #[test]
    fn biped_quad_legs_differ_per_structure() {
        let b = biped("b", Proportions::default());
        let q = quadruped("q", Proportions::default());
        let pb = BodyPartition::preset("biped-quad3", &b).unwrap();
        let pq = BodyPartition::preset("biped-quad3", &q).unwrap();
        assert_eq!(pb.part_names, pq.part_names);
        assert_eq!(pb.joints_of(2).len(), 6);
        assert_eq!(pq.joints_of(2).len(), 14);
        let tail = q.joint_index("Tail1").unwrap();
        assert!(!pq.covered().contains(&tail));
        let tq = tiny_quadruped("t", Proportions::default());
        assert_eq!(BodyPartition::preset("biped-quad3", &tq).unwrap().joints_of(2).len(), 4);
    }

    #[test]
    fn config_errors() {
        let s = biped("b", Proportions::default());
        let c = PartitionConfig::from_toml("parts = [\"a\", \"b\"]\n[structures.X]\na = [\"Hips\"]\nb = [\"Nope\"]\n").unwrap();
        assert!(matches!(c.resolve("X", &s), Err(Error::UnknownJoint { .. })));
        let c = PartitionConfig::from_toml("parts = [\"a\", \"b\"]\n[structures.X]\na = [\"Hips\"]\n").unwrap();
        assert!(matches!(c.resolve("X", &s), Err(Error::EmptyPart(p)) if p == "b"));
    }

    #[test]
    fn encoding_values() {
        assert_eq!(positional_encoding(0, 4, 1e4).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let e = positional_encoding(1, 2, 1e4).unwrap();
        assert!((e[0] - 1f64.sin()).abs() < 1e-12 && (e[1] - 1f64.cos()).abs() < 1e-12);
        assert!(matches!(positional_encoding(1, 3, 1e4), Err(Error::OddDim(3))));
    }

    #[test]
    fn uncovered_joint_sees_only_itself() {
        let p = BodyPartition::new(vec!["a".into()], vec![vec![0]], 2).unwrap();
        let m = build_mask(&p, true);
        let row = 1 + 1;
        let open: Vec<usize> = (0..m.size).filter(|&c| m.is_open(row, c)).collect();
        assert_eq!(open, vec![row]);
    }
}
