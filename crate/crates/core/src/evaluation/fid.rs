use nalgebra::{DMatrix, DVector, SymmetricEigen};
use partret_autograd::{prefixed, Adam, Module, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion_io::{MotionClip, NormStats};
use crate::networks::Conv1d;

/// Ridge added to covariances with fewer samples than dimensions.
pub const COV_RIDGE: f64 = 1e-6;

/// Clip lengths must be multiples of this.
pub const FID_STRIDE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidConfig {
    pub channels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FidConfig {
    fn default() -> Self {
        Self { channels: 256, epochs: 50, batch_size: 32, lr: 1e-3, seed: 0 }
    }
}

/// Convolutional autoencoder whose third encoder layer provides features.
#[derive(Clone, Debug)]
pub struct FidModel {
    pub stats: NormStats,
    encoder: [Conv1d; 3],
    decoder: [Conv1d; 3],
}

impl Module for FidModel {
    fn params_mut(&mut self) -> Vec<(String, &mut Var)> {
        let mut out = Vec::new();
        for (i, c) in self.encoder.iter_mut().enumerate() {
            out.extend(prefixed(&format!("enc{i}"), c.params_mut()));
        }
        for (i, c) in self.decoder.iter_mut().enumerate() {
            out.extend(prefixed(&format!("dec{i}"), c.params_mut()));
        }
        out
    }
}

fn stack(clips: &[&MotionClip], stats: &NormStats) -> Result<Var> {
    let (t, rows) = (clips[0].frames(), clips[0].num_joints() + 1);
    let mut data = Vec::with_capacity(clips.len() * t * rows * 4);
    for c in clips {
        if c.frames() != t || c.num_joints() + 1 != rows {
            return Err(Error::PairMismatch("feature clips must share length and joint count".into()));
        }
        data.extend_from_slice(stats.normalize(&c.data)?.data());
    }
    let b = clips.len();
    Ok(Var::constant(Tensor::new([b, t, rows, 4], data)).permute(&[0, 2, 3, 1]).reshape([b, rows * 4, t]))
}

impl FidModel {
    pub fn new(stats: NormStats, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let io = stats.rows() * 4;
        let c = channels;
        Self {
            encoder: [
                Conv1d::new(io, c, 15, 2, 1, rng),
                Conv1d::new(c, c, 15, 2, 1, rng),
                Conv1d::new(c, c, 3, 2, 1, rng),
            ],
            decoder: [Conv1d::new(c, c, 3, 1, 1, rng), Conv1d::new(c, c, 15, 1, 1, rng), Conv1d::new(c, io, 15, 1, 1, rng)],
            stats,
        }
    }

    /// Third-layer activations `[B, C, T / 32]`.
    fn encode(&self, x: &Var) -> Var {
        let h = self.encoder[0].forward(x).leaky_relu(0.2).max_pool_last(2);
        let h = self.encoder[1].forward(&h).leaky_relu(0.2).max_pool_last(2);
        self.encoder[2].forward(&h).tanh()
    }

    fn decode(&self, z: &Var) -> Var {
        let h = self.decoder[0].forward(&z.upsample_linear(2)).leaky_relu(0.2);
        let h = self.decoder[1].forward(&h.upsample_linear(4)).leaky_relu(0.2);
        self.decoder[2].forward(&h.upsample_linear(4))
    }

    fn check(&self, clips: &[&MotionClip]) -> Result<()> {
        let first = clips.first().ok_or_else(|| Error::EmptyDataset("no clips for features".into()))?;
        if first.frames() % FID_STRIDE != 0 {
            return Err(Error::BadLength(first.frames()));
        }
        if first.num_joints() + 1 != self.stats.rows() {
            return Err(Error::PairMismatch(format!(
                "feature model expects {} joints, clip has {}",
                self.stats.rows() - 1,
                first.num_joints()
            )));
        }
        Ok(())
    }

    /// Mean squared reconstruction error in normalized units.
    pub fn reconstruction_loss(&self, clips: &[&MotionClip]) -> Result<f64> {
        self.check(clips)?;
        let x = stack(clips, &self.stats)?;
        Ok(self.decode(&self.encode(&x)).sub(&x).sqr().mean_all().item())
    }

    /// Time-averaged third-layer features, one row per clip.
    pub fn features(&self, clips: &[&MotionClip]) -> Result<Vec<Vec<f64>>> {
        self.check(clips)?;
        let mut rows = Vec::with_capacity(clips.len());
        for chunk in clips.chunks(64) {
            let f = self.encode(&stack(chunk, &self.stats)?).mean_axis(2);
            let c = f.shape()[1];
            rows.extend(f.value().data().chunks(c).map(<[f64]>::to_vec));
        }
        Ok(rows)
    }
}

/// Trains the feature autoencoder on real clips of one structure and
/// returns it with the per-epoch mean training loss.
pub fn train_fid_model(clips: &[&MotionClip], config: &FidConfig) -> Result<(FidModel, Vec<f64>)> {
    let first = clips.first().ok_or_else(|| Error::EmptyDataset("no clips to train the feature model".into()))?;
    if first.frames() % FID_STRIDE != 0 {
        return Err(Error::BadLength(first.frames()));
    }
    let owned: Vec<MotionClip> = clips.iter().map(|c| (*c).clone()).collect();
    let stats = NormStats::compute(&owned)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FidModel::new(stats, config.channels, &mut rng);
    let mut opt = Adam::new(config.lr, 0.9, 0.999);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let batches: Vec<&[usize]> = order.chunks(config.batch_size.max(1)).collect();
        for idx in &batches {
            let batch: Vec<&MotionClip> = idx.iter().map(|&i| clips[i]).collect();
            let x = stack(&batch, &model.stats)?;
            let loss = model.decode(&model.encode(&x)).sub(&x).sqr().mean_all();
            sum += loss.item();
            let grads = loss.backward();
            opt.step(model.params_mut(), &grads);
        }
        history.push(sum / batches.len() as f64);
    }
    Ok((model, history))
}

/// Fréchet distance between Gaussian fits of two feature sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    pub fid: f64,
    /// A ridge of [`COV_RIDGE`] was added because a set had too few samples
    /// for a full-rank covariance.
    pub regularized: bool,
}

fn gaussian(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::EmptyDataset(format!("{n} feature rows, need at least 2")));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::PairMismatch("feature rows differ in width".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `||m_a - m_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})` with the matrix
/// root taken through eigen-decompositions, negative eigenvalues clipped.
pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<FidResult> {
    let (ma, mut ca) = gaussian(a)?;
    let (mb, mut cb) = gaussian(b)?;
    if ma.len() != mb.len() {
        return Err(Error::PairMismatch(format!("feature widths {} and {}", ma.len(), mb.len())));
    }
    let d = ma.len();
    let regularized = a.len() <= d || b.len() <= d;
    if regularized {
        let ridge = DMatrix::identity(d, d) * COV_RIDGE;
        ca += &ridge;
        cb += &ridge;
    }
    // Tr((C_a C_b)^{1/2}) = Tr((S C_b S)^{1/2}) with S = C_a^{1/2}.
    let s = psd_sqrt(&ca);
    let cross = psd_sqrt(&(&s * &cb * &s)).trace();
    let diff = (&ma - &mb).norm_squared();
    let value = diff + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(FidResult { fid: value.max(0.0), regularized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cloud(n: usize, d: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|j| rng.gen_range(-1.0..1.0) * (j + 1) as f64 + shift).collect()).collect()
    }

    #[test]
    fn identical_sets_score_zero() {
        let a = cloud(40, 5, 0.0, 1);
        let r = fid(&a, &a).unwrap();
        assert!(r.fid < 1e-4 && !r.regularized);
    }

    #[test]
    fn unit_mean_shift_scores_one() {
        let a = cloud(40, 3, 0.0, 2);
        let b: Vec<Vec<f64>> = a.iter().map(|r| vec![r[0] + 1.0, r[1], r[2]]).collect();
        assert!((fid(&a, &b).unwrap().fid - 1.0).abs() < 1e-9);
    }

    #[test]
    fn few_samples_are_regularized() {
        let a = cloud(3, 6, 0.0, 3);
        let r = fid(&a, &cloud(3, 6, 0.5, 4)).unwrap();
        assert!(r.regularized && r.fid.is_finite() && r.fid >= 0.0);
    }
}
