use std::sync::Arc;

use partret_autograd::Tensor;

use crate::error::{shape_err, Error, Result};
use crate::kinematics::{integrate_root_clip, wrap_angle, Quat};

use super::bvh::{enforce_hemisphere, RawMotion};
use super::skeleton::SkeletonDef;

/// Fixed-length facing-localized motion: `J` joint rotations followed by the
/// root velocity row `(vx, vy, vz, yaw rate)`, stored as `[T, J + 1, 4]`.
#[derive(Clone, Debug)]
pub struct MotionClip {
    pub skeleton: Arc<SkeletonDef>,
    pub data: Tensor,
    pub frame_time: f64,
}

impl MotionClip {
    pub fn new(skeleton: Arc<SkeletonDef>, data: Tensor, frame_time: f64) -> Result<MotionClip> {
        let s = data.shape();
        if s.len() != 3 || s[1] != skeleton.num_joints() + 1 || s[2] != 4 {
            return Err(shape_err(format!(
                "clip tensor {s:?} does not fit `{}` with {} joints",
                skeleton.name,
                skeleton.num_joints()
            )));
        }
        Ok(MotionClip { skeleton, data, frame_time })
    }

    /// Assembles a clip from rotations `[T, J, 4]` and velocity `[T, 4]`.
    pub fn from_parts(skeleton: Arc<SkeletonDef>, rotations: &Tensor, velocity: &Tensor, frame_time: f64) -> Result<MotionClip> {
        let j = skeleton.num_joints();
        let t = velocity.dim(0);
        if rotations.shape() != [t, j, 4] || velocity.shape() != [t, 4] {
            return Err(shape_err(format!(
                "rotations {:?} and velocity {:?} do not match {j} joints",
                rotations.shape(),
                velocity.shape()
            )));
        }
        let mut data = Vec::with_capacity(t * (j + 1) * 4);
        for f in 0..t {
            data.extend_from_slice(&rotations.data()[f * j * 4..(f + 1) * j * 4]);
            data.extend_from_slice(&velocity.data()[f * 4..(f + 1) * 4]);
        }
        MotionClip::new(skeleton, Tensor::new([t, j + 1, 4], data), frame_time)
    }

    pub fn frames(&self) -> usize {
        self.data.dim(0)
    }

    pub fn num_joints(&self) -> usize {
        self.skeleton.num_joints()
    }

    pub fn rotation(&self, t: usize, j: usize) -> Quat {
        let k = (t * (self.num_joints() + 1) + j) * 4;
        Quat::from_array(self.data.data()[k..k + 4].try_into().unwrap())
    }

    pub fn velocity(&self, t: usize) -> [f64; 4] {
        let k = (t * (self.num_joints() + 1) + self.num_joints()) * 4;
        self.data.data()[k..k + 4].try_into().unwrap()
    }

    /// Rotations `[T, J, 4]` and velocity `[T, 4]`.
    pub fn split_tensors(&self) -> (Tensor, Tensor) {
        let (t, j) = (self.frames(), self.num_joints());
        let mut rot = Vec::with_capacity(t * j * 4);
        let mut vel = Vec::with_capacity(t * 4);
        for row in self.data.data().chunks((j + 1) * 4) {
            rot.extend_from_slice(&row[..j * 4]);
            vel.extend_from_slice(&row[j * 4..]);
        }
        (Tensor::new([t, j, 4], rot), Tensor::new([t, 4], vel))
    }

    /// Renormalizes every rotation and re-applies the hemisphere rule.
    pub fn with_unit_rotations(&self) -> MotionClip {
        let (t, j) = (self.frames(), self.num_joints());
        let mut rows: Vec<Vec<Quat>> = (0..t).map(|f| (0..j).map(|k| self.rotation(f, k).normalize()).collect()).collect();
        enforce_hemisphere(&mut rows);
        let mut data = self.data.clone();
        for (f, row) in rows.iter().enumerate() {
            for (k, q) in row.iter().enumerate() {
                let base = (f * (j + 1) + k) * 4;
                data.data_mut()[base..base + 4].copy_from_slice(&q.to_array());
            }
        }
        MotionClip { skeleton: self.skeleton.clone(), data, frame_time: self.frame_time }
    }

    /// Mean root speed over frames, in offset units per frame.
    pub fn mean_speed(&self) -> f64 {
        let t = self.frames();
        (0..t)
            .map(|f| {
                let v = self.velocity(f);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .sum::<f64>()
            / t as f64
    }

    /// Re-attaches the integrated trajectory and heading, starting at the
    /// origin facing `+z`.
    pub fn to_raw(&self) -> RawMotion {
        let (positions, yaw) = integrate_root_clip(self);
        let rotations = (0..self.frames())
            .map(|t| {
                let mut row: Vec<Quat> = (0..self.num_joints()).map(|j| self.rotation(t, j)).collect();
                row[0] = Quat::from_yaw(yaw[t]).mul(row[0]);
                row
            })
            .collect();
        RawMotion::new(self.skeleton.clone(), self.frame_time, positions, rotations)
            .expect("clip frames are consistent by construction")
    }
}

/// Windowing options for [`localize_and_clip_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipOptions {
    pub clip_len: usize,
    pub fps: u32,
    /// Frames between window starts; `clip_len` gives non-overlapping windows.
    pub window_stride: usize,
}

impl ClipOptions {
    pub fn new(clip_len: usize, fps: u32) -> Self {
        Self { clip_len, fps, window_stride: clip_len }
    }
}

/// Integer decimation stride taking `source_fps` to `target_fps` within 1%.
pub fn decimation_stride(source_fps: f64, target_fps: u32) -> Result<usize> {
    let target = target_fps as f64;
    let stride = (source_fps / target).round();
    if stride < 1.0 || ((source_fps / stride) - target).abs() > 0.01 * target {
        return Err(Error::FpsMismatch { source_fps, target_fps });
    }
    Ok(stride as usize)
}

/// Non-overlapping windows of `clip_len` frames at `fps`.
pub fn localize_and_clip(raw: &RawMotion, clip_len: usize, fps: u32) -> Result<Vec<MotionClip>> {
    localize_and_clip_with(raw, ClipOptions::new(clip_len, fps))
}

/// Decimates, removes the root heading and cuts windows.
///
/// Each window starts at rest: its first velocity row is zero and its
/// heading is measured from its own first frame.
pub fn localize_and_clip_with(raw: &RawMotion, opts: ClipOptions) -> Result<Vec<MotionClip>> {
    if opts.clip_len == 0 || opts.window_stride == 0 {
        return Err(Error::Config("clip length and window stride must be positive".into()));
    }
    let stride = decimation_stride(raw.fps(), opts.fps)?;
    let frames: Vec<usize> = (0..raw.frames()).step_by(stride).collect();
    if frames.len() < opts.clip_len {
        return Err(Error::TooShort { frames: frames.len(), needed: opts.clip_len });
    }
    let skel = raw.skeleton.clone();
    let j = skel.num_joints();
    let frame_time = raw.frame_time * stride as f64;
    let headings: Vec<(f64, Quat)> = frames.iter().map(|&f| raw.rotations[f][0].split_yaw()).collect();

    let mut clips = Vec::new();
    let mut start = 0;
    while start + opts.clip_len <= frames.len() {
        let window = start..start + opts.clip_len;
        let mut rows: Vec<Vec<Quat>> = window
            .clone()
            .map(|i| {
                let mut row = raw.rotations[frames[i]].clone();
                row[0] = headings[i].1;
                row
            })
            .collect();
        enforce_hemisphere(&mut rows);
        let mut data = Vec::with_capacity(opts.clip_len * (j + 1) * 4);
        for (k, i) in window.enumerate() {
            for q in &rows[k] {
                data.extend_from_slice(&q.to_array());
            }
            if k == 0 {
                data.extend_from_slice(&[0.0; 4]);
            } else {
                let (p, q) = (raw.root_positions[frames[i - 1]], raw.root_positions[frames[i]]);
                let prev_yaw = headings[i - 1].0;
                let v = Quat::from_yaw(-prev_yaw).rotate([q[0] - p[0], q[1] - p[1], q[2] - p[2]]);
                data.extend_from_slice(&[v[0], v[1], v[2], wrap_angle(headings[i].0 - prev_yaw)]);
            }
        }
        clips.push(MotionClip::new(skel.clone(), Tensor::new([opts.clip_len, j + 1, 4], data), frame_time)?);
        start += opts.window_stride;
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::skeleton::JointDef;

    fn skel() -> Arc<SkeletonDef> {
        Arc::new(
            SkeletonDef::from_joints(
                "t",
                vec![JointDef::new("hips", None, [0.0, 1.0, 0.0]), JointDef::new("head", Some(0), [0.0, 0.5, 0.0])],
            )
            .unwrap(),
        )
    }

    fn raw(frames: usize, f: impl Fn(usize) -> ([f64; 3], Quat)) -> RawMotion {
        let (pos, rot): (Vec<_>, Vec<_>) = (0..frames)
            .map(|t| {
                let (p, q) = f(t);
                (p, vec![q, Quat::about(crate::kinematics::Axis::X, 0.1 * t as f64)])
            })
            .unzip();
        RawMotion::new(skel(), 1.0 / 30.0, pos, rot).unwrap()
    }

    #[test]
    fn stationary_pose_has_zero_velocity() {
        let m = raw(64, |_| ([0.0; 3], Quat::IDENTITY));
        let clips = localize_and_clip(&m, 64, 30).unwrap();
        assert_eq!(clips.len(), 1);
        let (_, vel) = clips[0].split_tensors();
        assert_eq!(vel.max_abs(), 0.0);
    }

    #[test]
    fn diagonal_walk_points_forward() {
        let h = std::f64::consts::FRAC_PI_4;
        let m = raw(64, |t| {
            let d = 0.05 * t as f64;
            ([d * h.sin(), 1.0, d * h.cos()], Quat::from_yaw(h))
        });
        let clip = &localize_and_clip(&m, 64, 30).unwrap()[0];
        for t in 1..64 {
            let v = clip.velocity(t);
            assert!(v[0].abs() < 1e-12 && (v[2] - 0.05).abs() < 1e-12 && v[3].abs() < 1e-12);
        }
        assert!(clip.rotation(5, 0).dot(Quat::IDENTITY) > 1.0 - 1e-12);
    }

    #[test]
    fn windows_drop_the_remainder() {
        let m = raw(130, |_| ([0.0; 3], Quat::IDENTITY));
        assert_eq!(localize_and_clip(&m, 64, 30).unwrap().len(), 2);
        assert!(matches!(localize_and_clip(&m, 200, 30), Err(Error::TooShort { frames: 130, needed: 200 })));
    }

    #[test]
    fn decimation_respects_tolerance() {
        assert_eq!(decimation_stride(120.0, 30).unwrap(), 4);
        assert_eq!(decimation_stride(30.2, 30).unwrap(), 1);
        assert!(decimation_stride(50.0, 30).is_err());
        assert!(decimation_stride(10.0, 30).is_err());
    }

    #[test]
    fn to_raw_restores_turning_trajectory() {
        let m = raw(64, |t| {
            let a = 0.03 * t as f64;
            ([2.0 * a.sin(), 1.0, 2.0 * a.cos()], Quat::from_yaw(a + 0.5).mul(Quat::about(crate::kinematics::Axis::X, 0.2)))
        });
        let clip = &localize_and_clip(&m, 64, 30).unwrap()[0];
        let back = clip.to_raw();
        let undo = Quat::from_yaw(-0.5);
        for t in 0..64 {
            let p0 = m.root_positions[0];
            let p = m.root_positions[t];
            let expect = undo.rotate([p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]);
            for a in 0..3 {
                assert!((back.root_positions[t][a] - expect[a]).abs() < 1e-9);
            }
            let q = undo.mul(m.rotations[t][0]);
            assert!(back.rotations[t][0].dot(q).abs() > 1.0 - 1e-12);
        }
    }
}
