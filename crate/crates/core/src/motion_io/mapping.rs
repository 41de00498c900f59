use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};
use crate::kinematics::Quat;

use super::bvh::RawMotion;
use super::skeleton::SkeletonDef;

/// Marks a trained joint that has no counterpart in the input: it gets a
/// zero offset and identity rotation, i.e. a zero-length bone.
pub const ZERO_BONE: &str = "@zero";

/// Maps the joints of a trained skeleton onto an input hierarchy.
///
/// ```toml
/// [joints]
/// Spine1 = "@zero"
/// LeftUpLeg = "mixamorig:LeftUpLeg"
/// ```
///
/// Trained joints that are not listed map to the input joint of the same
/// name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointMapping {
    #[serde(default)]
    pub joints: BTreeMap<String, String>,
}

impl JointMapping {
    pub fn load(path: &Path) -> Result<JointMapping> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Re-expresses `input` on the topology of `trained`, taking offsets and
    /// rotations from the mapped input joints.
    pub fn apply(&self, input: &RawMotion, trained: &SkeletonDef) -> Result<RawMotion> {
        let src = &input.skeleton;
        let sources: Vec<Option<usize>> = trained
            .joint_names
            .iter()
            .map(|name| {
                let target = self.joints.get(name).map(String::as_str).unwrap_or(name);
                if target == ZERO_BONE {
                    return Ok(None);
                }
                src.joint_index(target)
                    .map(Some)
                    .ok_or_else(|| Error::UnknownJoint { part: format!("mapping for `{name}`"), joint: target.to_string() })
            })
            .collect::<Result<_>>()?;
        if sources[0].is_none() {
            return Err(Error::Config("the root joint cannot be a zero-length bone".into()));
        }
        let mut joints = trained.joints();
        for (j, s) in joints.iter_mut().zip(&sources) {
            j.offset = s.map_or([0.0; 3], |i| src.offsets[i]);
            j.end_site = s.and_then(|i| src.end_sites[i]).or(j.end_site);
        }
        let skeleton = Arc::new(SkeletonDef::from_joints(src.name.clone(), joints)?);
        let rotations = input
            .rotations
            .iter()
            .map(|row| sources.iter().map(|s| s.map_or(Quat::IDENTITY, |i| row[i])).collect())
            .collect();
        RawMotion::new(skeleton, input.frame_time, input.root_positions.clone(), rotations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::skeleton::JointDef;

    #[test]
    fn zero_bone_inserts_identity_joint() {
        let input = Arc::new(
            SkeletonDef::from_joints(
                "in",
                vec![JointDef::new("hips", None, [0.0, 1.0, 0.0]), JointDef::new("head", Some(0), [0.0, 0.5, 0.0])],
            )
            .unwrap(),
        );
        let trained = SkeletonDef::from_joints(
            "tr",
            vec![
                JointDef::new("hips", None, [0.0, 1.0, 0.0]),
                JointDef::new("spine", Some(0), [0.0, 0.2, 0.0]),
                JointDef::new("head", Some(1), [0.0, 0.3, 0.0]),
            ],
        )
        .unwrap();
        let q = Quat::from_yaw(0.4);
        let motion = RawMotion::new(input, 0.1, vec![[0.0; 3]; 2], vec![vec![q, q]; 2]).unwrap();
        let map: JointMapping = toml::from_str("[joints]\nspine = \"@zero\"\n").unwrap();
        let out = map.apply(&motion, &trained).unwrap();
        assert_eq!(out.skeleton.offsets[1], [0.0; 3]);
        assert_eq!(out.skeleton.offsets[2], [0.0, 0.5, 0.0]);
        assert_eq!(out.rotations[0][1], Quat::IDENTITY);
        assert_eq!(out.rotations[1][2], q);

        let bad: JointMapping = toml::from_str("[joints]\nspine = \"nope\"\n").unwrap();
        assert!(matches!(bad.apply(&motion, &trained), Err(Error::UnknownJoint { .. })));
    }
}
