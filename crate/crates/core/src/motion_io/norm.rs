use partret_autograd::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

use super::clip::MotionClip;

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-5;

/// Per-channel z-score statistics over `(J + 1) x 4` motion channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<[f64; 4]>,
    pub std: Vec<[f64; 4]>,
}

impl NormStats {
    /// Population mean and standard deviation over every frame of `clips`.
    pub fn compute(clips: &[MotionClip]) -> Result<NormStats> {
        let first = clips.first().ok_or_else(|| Error::EmptyDataset("no clips to compute statistics from".into()))?;
        let rows = first.num_joints() + 1;
        let mut sum = vec![[0.0; 4]; rows];
        let mut count = 0usize;
        for c in clips {
            if c.num_joints() + 1 != rows {
                return Err(shape_err(format!("clip with {} joints among clips with {}", c.num_joints(), rows - 1)));
            }
            for frame in c.data.data().chunks(rows * 4) {
                for (acc, x) in sum.iter_mut().zip(frame.chunks(4)) {
                    for k in 0..4 {
                        acc[k] += x[k];
                    }
                }
            }
            count += c.frames();
        }
        let n = count as f64;
        let mean: Vec<[f64; 4]> = sum.iter().map(|s| s.map(|v| v / n)).collect();
        let mut var = vec![[0.0; 4]; rows];
        for c in clips {
            for frame in c.data.data().chunks(rows * 4) {
                for ((acc, x), m) in var.iter_mut().zip(frame.chunks(4)).zip(&mean) {
                    for k in 0..4 {
                        acc[k] += (x[k] - m[k]).powi(2);
                    }
                }
            }
        }
        let std = var.iter().map(|v| v.map(|s| (s / n).sqrt().max(STD_FLOOR))).collect();
        Ok(NormStats { mean, std })
    }

    pub fn rows(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_tensor(&self) -> Tensor {
        Tensor::new([self.rows(), 4], self.mean.concat())
    }

    pub fn std_tensor(&self) -> Tensor {
        Tensor::new([self.rows(), 4], self.std.concat())
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        let r = shape.len();
        if r < 2 || shape[r - 2] != self.rows() || shape[r - 1] != 4 {
            return Err(shape_err(format!("tensor {shape:?} does not end in [{}, 4]", self.rows())));
        }
        Ok(())
    }

    /// `(x - mean) / std` over a tensor ending in `[J + 1, 4]`.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x.shape())?;
        let (m, s) = (self.mean.concat(), self.std.concat());
        let n = m.len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = (*v - m[i % n]) / s[i % n];
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x.shape())?;
        let (m, s) = (self.mean.concat(), self.std.concat());
        let n = m.len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v * s[i % n] + m[i % n];
        }
        Ok(out)
    }

    /// Differentiable inverse of [`NormStats::normalize`].
    pub fn denormalize_var(&self, x: &Var) -> Result<Var> {
        self.check(x.shape())?;
        Ok(x.mul(&Var::constant(self.std_tensor())).add(&Var::constant(self.mean_tensor())))
    }

    pub fn apply(&self, clip: &MotionClip) -> Result<MotionClip> {
        MotionClip::new(clip.skeleton.clone(), self.normalize(&clip.data)?, clip.frame_time)
    }

    pub fn invert(&self, clip: &MotionClip) -> Result<MotionClip> {
        MotionClip::new(clip.skeleton.clone(), self.denormalize(&clip.data)?, clip.frame_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::skeleton::{JointDef, SkeletonDef};
    use std::sync::Arc;

    fn clip(f: impl FnMut(usize) -> f64) -> MotionClip {
        let skel = Arc::new(SkeletonDef::from_joints("n", vec![JointDef::new("r", None, [0.0, 1.0, 0.0])]).unwrap());
        MotionClip::new(skel, Tensor::from_fn([4, 2, 4], f), 1.0 / 30.0).unwrap()
    }

    #[test]
    fn identical_clips_hit_the_floor() {
        let clips = vec![clip(|_| 0.3), clip(|_| 0.3)];
        let s = NormStats::compute(&clips).unwrap();
        assert!(s.std.iter().flatten().all(|&v| v == STD_FLOOR));
        assert!(s.apply(&clips[0]).unwrap().data.max_abs() < 1e-9);
    }

    #[test]
    fn known_mean() {
        // Alternating 0 and 1 per frame averages to 0.5.
        let clips = vec![clip(|i| ((i / 8) % 2) as f64)];
        let s = NormStats::compute(&clips).unwrap();
        for v in s.mean.iter().flatten() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        for v in s.std.iter().flatten() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(NormStats::compute(&[]), Err(Error::EmptyDataset(_))));
    }
}
