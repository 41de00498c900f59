use std::sync::Arc;

use partret_autograd::Tensor;

use crate::body_parts::BodyPartition;
use crate::error::{shape_err, Error, Result};
use crate::motion_io::{MotionClip, NormStats, SkeletonDef};

use super::losses::VelocityStats;

impl VelocityStats {
    /// Root speed range over every frame but the first of each clip, whose
    /// velocity is zero by construction.
    pub fn from_clips(clips: &[MotionClip]) -> Result<VelocityStats> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in clips {
            for t in 1..c.frames() {
                let v = c.velocity(t);
                let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        if !lo.is_finite() {
            return Err(Error::EmptyDataset("no frames to compute velocity range from".into()));
        }
        Ok(VelocityStats { v_min: lo, v_max: hi })
    }
}

/// One structure's training clips with their statistics and partition.
#[derive(Clone, Debug)]
pub struct StructureData {
    pub id: String,
    pub partition: BodyPartition,
    pub stats: NormStats,
    pub velocity: VelocityStats,
    /// Clips in physical units.
    pub clips: Vec<MotionClip>,
    normalized: Vec<Tensor>,
    skeleton_of: Vec<usize>,
    skeletons: Vec<Arc<SkeletonDef>>,
}

/// A stacked, normalized batch with the skeleton of every clip.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, T, J + 1, 4]`.
    pub motion: Tensor,
    pub skeletons: Vec<Arc<SkeletonDef>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.skeletons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeletons.is_empty()
    }
}

impl StructureData {
    /// Computes statistics from `clips`.
    pub fn new(id: impl Into<String>, clips: Vec<MotionClip>, partition: BodyPartition) -> Result<StructureData> {
        let stats = NormStats::compute(&clips)?;
        let velocity = VelocityStats::from_clips(&clips)?;
        Self::with_stats(id, clips, partition, stats, velocity)
    }

    /// Uses statistics computed elsewhere, e.g. restored from a checkpoint.
    pub fn with_stats(
        id: impl Into<String>,
        clips: Vec<MotionClip>,
        partition: BodyPartition,
        stats: NormStats,
        velocity: VelocityStats,
    ) -> Result<StructureData> {
        let id = id.into();
        let first = clips.first().ok_or_else(|| Error::EmptyDataset(format!("structure `{id}` has no clips")))?;
        let (frames, joints) = (first.frames(), first.num_joints());
        if partition.num_joints != joints {
            return Err(Error::PartitionMismatch(format!(
                "partition covers {} joints, clips of `{id}` have {joints}",
                partition.num_joints
            )));
        }
        let mut skeletons: Vec<Arc<SkeletonDef>> = Vec::new();
        let mut skeleton_of = Vec::with_capacity(clips.len());
        let mut normalized = Vec::with_capacity(clips.len());
        for c in &clips {
            if c.frames() != frames || c.num_joints() != joints || !c.skeleton.same_structure(&first.skeleton) {
                return Err(shape_err(format!("clips of `{id}` differ in length or topology")));
            }
            let k = match skeletons.iter().position(|s| Arc::ptr_eq(s, &c.skeleton) || **s == *c.skeleton) {
                Some(k) => k,
                None => {
                    skeletons.push(c.skeleton.clone());
                    skeletons.len() - 1
                }
            };
            skeleton_of.push(k);
            normalized.push(stats.normalize(&c.data)?);
        }
        Ok(StructureData { id, partition, stats, velocity, clips, normalized, skeleton_of, skeletons })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.clips[0].frames()
    }

    /// Distinct skeletons in first-seen order.
    pub fn skeletons(&self) -> &[Arc<SkeletonDef>] {
        &self.skeletons
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let per = self.normalized[0].numel();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend_from_slice(self.normalized[i].data());
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.normalized[0].shape());
        Batch {
            motion: Tensor::new(shape, data),
            skeletons: indices.iter().map(|&i| self.skeletons[self.skeleton_of[i]].clone()).collect(),
        }
    }
}

/// Groups batch items by skeleton: distinct skeletons in first-seen order
/// and, per item, the index of its skeleton.
pub fn group_skeletons(skeletons: &[Arc<SkeletonDef>]) -> (Vec<Arc<SkeletonDef>>, Vec<usize>) {
    let mut unique: Vec<Arc<SkeletonDef>> = Vec::new();
    let mut of = Vec::with_capacity(skeletons.len());
    for s in skeletons {
        let k = match unique.iter().position(|u| Arc::ptr_eq(u, s) || **u == **s) {
            Some(k) => k,
            None => {
                unique.push(s.clone());
                unique.len() - 1
            }
        };
        of.push(k);
    }
    (unique, of)
}
