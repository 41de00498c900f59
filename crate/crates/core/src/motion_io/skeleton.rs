use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Axis;

/// One BVH channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Position(Axis),
    Rotation(Axis),
}

impl Channel {
    pub fn parse(name: &str) -> Option<Channel> {
        let axis = match name.as_bytes().first()? {
            b'X' | b'x' => Axis::X,
            b'Y' | b'y' => Axis::Y,
            b'Z' | b'z' => Axis::Z,
            _ => return None,
        };
        match &name[1..].to_ascii_lowercase()[..] {
            "position" => Some(Channel::Position(axis)),
            "rotation" => Some(Channel::Rotation(axis)),
            _ => None,
        }
    }

    pub fn name(self) -> String {
        match self {
            Channel::Position(a) => format!("{}position", a.letter()),
            Channel::Rotation(a) => format!("{}rotation", a.letter()),
        }
    }
}

/// Input row for [`SkeletonDef::from_joints`].
#[derive(Clone, Debug, PartialEq)]
pub struct JointDef {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub end_site: Option<[f64; 3]>,
    pub channels: Vec<Channel>,
}

impl JointDef {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: [f64; 3]) -> Self {
        let channels = match parent {
            None => default_root_channels(),
            Some(_) => default_joint_channels(),
        };
        Self { name: name.into(), parent, offset, end_site: None, channels }
    }

    pub fn with_end_site(mut self, offset: [f64; 3]) -> Self {
        self.end_site = Some(offset);
        self
    }
}

pub fn default_root_channels() -> Vec<Channel> {
    use Axis::*;
    vec![
        Channel::Position(X),
        Channel::Position(Y),
        Channel::Position(Z),
        Channel::Rotation(Z),
        Channel::Rotation(X),
        Channel::Rotation(Y),
    ]
}

pub fn default_joint_channels() -> Vec<Channel> {
    vec![Channel::Rotation(Axis::Z), Channel::Rotation(Axis::X), Channel::Rotation(Axis::Y)]
}

/// A concrete skeleton: joint tree, bone offsets and derived height.
///
/// Joints are stored so that every parent precedes its children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDef {
    pub name: String,
    pub joint_names: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub offsets: Vec<[f64; 3]>,
    /// Joints that carry an End Site in the source file.
    pub end_effectors: BTreeSet<usize>,
    pub end_sites: Vec<Option<[f64; 3]>>,
    pub channels: Vec<Vec<Channel>>,
    pub height: f64,
}

impl SkeletonDef {
    /// Validates the tree, reorders joints parent-first if needed and derives
    /// the height.
    pub fn from_joints(name: impl Into<String>, joints: Vec<JointDef>) -> Result<SkeletonDef> {
        let n = joints.len();
        if n == 0 {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        let mut names = BTreeSet::new();
        for j in &joints {
            if !names.insert(j.name.as_str()) {
                return Err(Error::InvalidSkeleton(format!("duplicate joint `{}`", j.name)));
            }
            if let Some(p) = j.parent {
                if p >= n {
                    return Err(Error::InvalidSkeleton(format!("joint `{}` has parent {p} of {n}", j.name)));
                }
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| joints[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidSkeleton(format!("expected one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); n];
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                children[p].push(i);
            }
        }
        // Depth-first preorder keeps sibling order, like BVH files.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev());
        }
        if order.len() != n {
            return Err(Error::InvalidSkeleton("joint graph has a cycle or detached joints".into()));
        }
        let mut new_index = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut skel = SkeletonDef {
            name: name.into(),
            joint_names: Vec::with_capacity(n),
            parents: Vec::with_capacity(n),
            offsets: Vec::with_capacity(n),
            end_effectors: BTreeSet::new(),
            end_sites: Vec::with_capacity(n),
            channels: Vec::with_capacity(n),
            height: 0.0,
        };
        for &old in &order {
            let j = &joints[old];
            if j.end_site.is_some() {
                skel.end_effectors.insert(new_index[old]);
            }
            skel.joint_names.push(j.name.clone());
            skel.parents.push(j.parent.map(|p| new_index[p]));
            skel.offsets.push(j.offset);
            skel.end_sites.push(j.end_site);
            skel.channels.push(j.channels.clone());
        }
        skel.height = skel.rest_height();
        if !(skel.height > 0.0) || !skel.height.is_finite() {
            return Err(Error::InvalidSkeleton(format!("rest pose has height {}", skel.height)));
        }
        Ok(skel)
    }

    /// Rebuilds the joint rows, e.g. to edit offsets before revalidating.
    pub fn joints(&self) -> Vec<JointDef> {
        (0..self.num_joints())
            .map(|i| JointDef {
                name: self.joint_names[i].clone(),
                parent: self.parents[i],
                offset: self.offsets[i],
                end_site: self.end_sites[i],
                channels: self.channels[i].clone(),
            })
            .collect()
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn children(&self, joint: usize) -> Vec<usize> {
        (0..self.num_joints()).filter(|&i| self.parents[i] == Some(joint)).collect()
    }

    /// Joint positions with identity rotations, root at its own offset.
    pub fn rest_positions(&self) -> Vec<[f64; 3]> {
        let mut pos: Vec<[f64; 3]> = Vec::with_capacity(self.num_joints());
        for j in 0..self.num_joints() {
            let o = self.offsets[j];
            let base = self.parents[j].map_or([0.0; 3], |p| pos[p]);
            pos.push([base[0] + o[0], base[1] + o[1], base[2] + o[2]]);
        }
        pos
    }

    /// Vertical extent of the rest pose, including end sites and the ground
    /// point under the origin.
    fn rest_height(&self) -> f64 {
        let pos = self.rest_positions();
        let mut ys = vec![0.0];
        for (j, p) in pos.iter().enumerate() {
            ys.push(p[1]);
            if let Some(e) = self.end_sites[j] {
                ys.push(p[1] + e[1]);
            }
        }
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Foot joints used by contact metrics: end effectors whose name looks
    /// like a foot, falling back to the lowest end effectors.
    pub fn feet(&self) -> Vec<usize> {
        const KEYS: [&str; 4] = ["foot", "toe", "ankle", "paw"];
        let named: Vec<usize> = self
            .end_effectors
            .iter()
            .copied()
            .filter(|&j| {
                let n = self.joint_names[j].to_ascii_lowercase();
                KEYS.iter().any(|k| n.contains(k))
            })
            .collect();
        if !named.is_empty() {
            return named;
        }
        let pos = self.rest_positions();
        let low = self.end_effectors.iter().map(|&j| pos[j][1]).fold(f64::INFINITY, f64::min);
        self.end_effectors
            .iter()
            .copied()
            .filter(|&j| pos[j][1] <= low + 1e-3 * self.height)
            .collect()
    }

    /// Same topology with different offsets.
    pub fn with_offsets(&self, name: impl Into<String>, offsets: Vec<[f64; 3]>) -> Result<SkeletonDef> {
        if offsets.len() != self.num_joints() {
            return Err(Error::ShapeMismatch(format!(
                "{} offsets for {} joints",
                offsets.len(),
                self.num_joints()
            )));
        }
        let mut joints = self.joints();
        for (j, o) in joints.iter_mut().zip(offsets) {
            j.offset = o;
        }
        SkeletonDef::from_joints(name, joints)
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, name: impl Into<String>, factor: f64) -> Result<SkeletonDef> {
        let scale = |v: [f64; 3]| [v[0] * factor, v[1] * factor, v[2] * factor];
        let mut joints = self.joints();
        for j in &mut joints {
            j.offset = scale(j.offset);
            j.end_site = j.end_site.map(scale);
        }
        SkeletonDef::from_joints(name, joints)
    }

    /// True when both skeletons have the same joint names and tree.
    pub fn same_structure(&self, other: &SkeletonDef) -> bool {
        self.joint_names == other.joint_names && self.parents == other.parents
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Vec<JointDef> {
        vec![
            JointDef::new("root", None, [0.0, 1.0, 0.0]),
            JointDef::new("mid", Some(0), [0.0, 1.0, 0.0]),
            JointDef::new("tip", Some(1), [0.0, 1.0, 0.0]),
        ]
    }

    #[test]
    fn chain_height_includes_root_height() {
        let s = SkeletonDef::from_joints("c", chain()).unwrap();
        // Recursive oracle: the tip sits at the sum of all y offsets.
        fn y(joints: &[JointDef], j: usize) -> f64 {
            joints[j].offset[1] + joints[j].parent.map_or(0.0, |p| y(joints, p))
        }
        assert!((s.height - y(&chain(), 2)).abs() < 1e-12);
        assert_eq!(s.height, 3.0);
    }

    #[test]
    fn children_listed_before_parents_are_reordered() {
        let joints = vec![
            JointDef::new("tip", Some(2), [0.0, 1.0, 0.0]),
            JointDef::new("root", None, [0.0, 0.5, 0.0]),
            JointDef::new("mid", Some(1), [0.0, 1.0, 0.0]),
        ];
        let s = SkeletonDef::from_joints("r", joints).unwrap();
        assert_eq!(s.joint_names, ["root", "mid", "tip"]);
        assert_eq!(s.parents, [None, Some(0), Some(1)]);
    }

    #[test]
    fn rejects_two_roots_and_cycles() {
        let mut j = chain();
        j[1].parent = None;
        assert!(matches!(SkeletonDef::from_joints("x", j), Err(Error::InvalidSkeleton(_))));
        let mut j = chain();
        j[1].parent = Some(2);
        assert!(matches!(SkeletonDef::from_joints("x", j), Err(Error::InvalidSkeleton(_))));
    }

    #[test]
    fn channel_names_round_trip() {
        for name in ["Xposition", "Yrotation", "Zrotation"] {
            assert_eq!(Channel::parse(name).unwrap().name(), name);
        }
        assert!(Channel::parse("Wrotation").is_none());
        assert!(Channel::parse("Xscale").is_none());
    }

    #[test]
    fn feet_prefer_named_end_effectors() {
        let joints = vec![
            JointDef::new("hips", None, [0.0, 1.0, 0.0]),
            JointDef::new("LeftFoot", Some(0), [0.1, -0.9, 0.0]).with_end_site([0.0, -0.1, 0.1]),
            JointDef::new("Head", Some(0), [0.0, 0.6, 0.0]).with_end_site([0.0, 0.2, 0.0]),
        ];
        let s = SkeletonDef::from_joints("f", joints).unwrap();
        assert_eq!(s.feet(), vec![1]);
        assert_eq!(s.end_effectors.len(), 2);
    }
}
