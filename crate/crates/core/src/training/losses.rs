use partret_autograd::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kinematics::fk;
use crate::motion_io::SkeletonDef;

/// Speeds below this count as standing still in [`vel_loss`].
pub const ZERO_SPEED: f64 = 1e-6;

/// Epsilon inside the quaternion normalization before kinematics.
pub const QUAT_EPS: f64 = 1e-8;

/// Coefficients of the total generator loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub rec: f64,
    pub cyc: f64,
    pub kine: f64,
    pub adv: f64,
    /// Only used in biped-quadruped mode.
    pub vel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rec: 1.0, cyc: 2.5, kine: 100.0, adv: 1.0, vel: 1000.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rec, self.cyc, self.kine, self.adv, self.vel];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {all:?}")));
        }
        Ok(())
    }
}

/// Which least-squares objective the discriminator minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvConvention {
    /// Real scores pushed to 1, fake to 0; the generator pushes fakes to 1.
    #[default]
    Standard,
    /// Swapped targets: the discriminator minimizes
    /// `mean(C(real)^2) + mean((1 - C(fake))^2)`.
    #[serde(alias = "paper_literal")]
    Swapped,
}

/// Minimum and maximum root speed of one structure's training set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityStats {
    pub v_min: f64,
    pub v_max: f64,
}

impl VelocityStats {
    pub fn check(&self) -> Result<()> {
        if !(self.v_max > self.v_min) {
            return Err(Error::DegenerateStats { min: self.v_min, max: self.v_max });
        }
        Ok(())
    }
}

fn same_shape(a: &Var, b: &Var, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn mse(a: &Var, b: &Var) -> Result<Var> {
    same_shape(a, b, "mse")?;
    Ok(a.sub(b).sqr().mean_all())
}

/// Mean squared error over the rows of axis `axis` selected by `keep`.
///
/// `keep` has one entry per row; unselected rows contribute nothing and
/// receive no gradient.
pub fn masked_mse(a: &Var, b: &Var, axis: usize, keep: &[bool]) -> Result<Var> {
    same_shape(a, b, "masked mse")?;
    let s = a.shape();
    if s.get(axis) != Some(&keep.len()) {
        return Err(shape_err(format!("mask of {} rows for axis {axis} of {s:?}", keep.len())));
    }
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == keep.len() {
        return mse(a, b);
    }
    let rows: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    if rows.is_empty() {
        return Ok(Var::scalar(0.0));
    }
    Ok(a.index_select(axis, &rows).sub(&b.index_select(axis, &rows)).sqr().mean_all())
}

/// `||M - M_hat||^2` as a mean over elements.
pub fn rec_loss(m: &Var, m_hat: &Var) -> Result<Var> {
    mse(m, m_hat)
}

/// Latent-code MSE plus motion-space cycle MSE.
pub fn cyc_loss(h_a: &Var, h_b: &Var, m: &Var, m_bar: &Var) -> Result<Var> {
    Ok(mse(h_a, h_b)?.add(&mse(m, m_bar)?))
}

/// Generator side of the least-squares objective: fakes pushed to 1.
pub fn adv_generator_loss(fake: &Var) -> Var {
    fake.add_scalar(-1.0).sqr().mean_all()
}

/// Discriminator side of the least-squares objective. Detach the fake
/// motion before scoring it.
pub fn adv_discriminator_loss(real: &Var, fake: &Var, convention: AdvConvention) -> Var {
    match convention {
        AdvConvention::Standard => real.add_scalar(-1.0).sqr().mean_all().add(&fake.sqr().mean_all()),
        AdvConvention::Swapped => real.sqr().mean_all().add(&fake.add_scalar(-1.0).sqr().mean_all()),
    }
}

/// `(loss_D, loss_G)` from discriminator scores.
pub fn adv_losses(real: &Var, fake: &Var, convention: AdvConvention) -> (Var, Var) {
    (adv_discriminator_loss(real, fake, convention), adv_generator_loss(fake))
}

/// World joint positions of physical-space motion `[B, T, J + 1, 4]` on
/// one skeleton, with rotations renormalized first.
pub fn motion_positions(motion: &Var, skeleton: &SkeletonDef) -> Result<Var> {
    let s = motion.shape();
    let j = skeleton.num_joints();
    if s.len() != 4 || s[2] != j + 1 || s[3] != 4 {
        return Err(shape_err(format!("motion {s:?} does not fit {j} joints")));
    }
    let rot = motion.narrow(2, 0, j).normalize_last(QUAT_EPS);
    let vel = motion.narrow(2, j, 1).reshape([s[0], s[1], 4]);
    fk(&rot, &vel, skeleton)
}

/// Position-space cycle and reconstruction error for physical-space
/// motions on one skeleton. `joints` optionally restricts the joints that
/// count.
pub fn kine_loss(m: &Var, m_bar: &Var, m_hat: &Var, skeleton: &SkeletonDef, joints: Option<&[bool]>) -> Result<Var> {
    let p = motion_positions(m, skeleton)?;
    let p_bar = motion_positions(m_bar, skeleton)?;
    let p_hat = motion_positions(m_hat, skeleton)?;
    match joints {
        Some(keep) => Ok(masked_mse(&p, &p_bar, 2, keep)?.add(&masked_mse(&p, &p_hat, 2, keep)?)),
        None => Ok(mse(&p, &p_bar)?.add(&mse(&p, &p_hat)?)),
    }
}

/// Direction times range-normalized speed, `[..., 3]`.
fn scaled_velocity(v: &Var, stats: VelocityStats) -> Result<Var> {
    stats.check()?;
    let axis = v.shape().len() - 1;
    let speed = v.sqr().sum_axis(axis).add_scalar(1e-12).sqrt();
    let moving = Var::constant(speed.value().map(|s| if s >= ZERO_SPEED { 1.0 } else { 0.0 }));
    let dir = v.div(&speed.clamp_min(ZERO_SPEED)).mul(&moving);
    let range = stats.v_max - stats.v_min;
    Ok(dir.mul(&speed.add_scalar(-stats.v_min).mul_scalar(1.0 / range)))
}

/// Velocity transfer loss between linear root velocities `[..., 3]` of a
/// source motion and its retargeted counterpart, averaged over frames.
pub fn vel_loss(v_s: &Var, v_t: &Var, stats_s: VelocityStats, stats_t: VelocityStats) -> Result<Var> {
    same_shape(v_s, v_t, "velocity loss")?;
    if v_s.shape().last() != Some(&3) {
        return Err(shape_err(format!("velocities must end in 3, got {:?}", v_s.shape())));
    }
    let a = scaled_velocity(v_s, stats_s)?;
    let b = scaled_velocity(v_t, stats_t)?;
    let axis = a.shape().len() - 1;
    Ok(a.sub(&b).sqr().sum_axis(axis).mean_all())
}

/// Linear root velocity `[B, T, 3]` of motion `[B, T, J + 1, 4]`.
pub fn root_linear_velocity(motion: &Var) -> Var {
    let s = motion.shape();
    motion.narrow(2, s[2] - 1, 1).narrow(3, 0, 3).reshape([s[0], s[1], 3])
}

/// Root speeds of every frame of physical-space clips, `[T]` per clip.
pub fn speeds(velocity_rows: &Tensor) -> Vec<f64> {
    velocity_rows
        .data()
        .chunks(4)
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(shape: &[usize], f: impl FnMut(usize) -> f64) -> Var {
        Var::constant(Tensor::from_fn(shape.to_vec(), f))
    }

    #[test]
    fn rec_loss_conventions() {
        let a = var(&[2, 3], |i| i as f64);
        let b = var(&[2, 3], |i| i as f64 + 1.0);
        assert_eq!(rec_loss(&a, &a).unwrap().item(), 0.0);
        assert_eq!(rec_loss(&a, &b).unwrap().item(), 1.0);
        assert_eq!(rec_loss(&b, &a).unwrap().item(), rec_loss(&a, &b).unwrap().item());
        assert!(matches!(rec_loss(&a, &var(&[3, 2], |_| 0.0)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn cyc_latent_term() {
        let h = var(&[4], |_| 0.0);
        let h2 = var(&[4], |_| 0.3);
        let m = var(&[2], |_| 1.0);
        assert!((cyc_loss(&h, &h2, &m, &m).unwrap().item() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn adversarial_arithmetic() {
        let half = var(&[5], |_| 0.5);
        let (d, g) = adv_losses(&half, &half, AdvConvention::Standard);
        assert!((d.item() - 0.5).abs() < 1e-15 && (g.item() - 0.25).abs() < 1e-15);
        let (d, _) = adv_losses(&var(&[3], |_| 1.0), &var(&[3], |_| 0.0), AdvConvention::Standard);
        assert_eq!(d.item(), 0.0);
        let (d, _) = adv_losses(&var(&[3], |_| 0.0), &var(&[3], |_| 1.0), AdvConvention::Swapped);
        assert_eq!(d.item(), 0.0);
    }

    #[test]
    fn velocity_loss_fixtures() {
        let s = VelocityStats { v_min: 0.1, v_max: 0.5 };
        let t = VelocityStats { v_min: 0.2, v_max: 1.0 };
        let at = |speed: f64, dir: f64| var(&[1, 1, 3], move |i| if i == 2 { dir * speed } else { 0.0 });
        assert!(vel_loss(&at(0.1, 1.0), &at(0.2, 1.0), s, t).unwrap().item().abs() < 1e-12);
        assert!(vel_loss(&at(0.5, 1.0), &at(1.0, 1.0), s, t).unwrap().item().abs() < 1e-12);
        // Mid-range, opposite directions: (0.5 - (-0.5))^2 on one axis.
        let l = vel_loss(&at(0.3, 1.0), &at(0.6, -1.0), s, t).unwrap().item();
        assert!((l - 1.0).abs() < 1e-9);
        let flat = VelocityStats { v_min: 0.3, v_max: 0.3 };
        assert!(matches!(vel_loss(&at(0.3, 1.0), &at(0.3, 1.0), flat, t), Err(Error::DegenerateStats { .. })));
    }

    #[test]
    fn masked_rows_get_no_gradient() {
        let a = Var::param(Tensor::from_fn([1, 3, 2], |i| i as f64));
        let b = var(&[1, 3, 2], |_| 0.0);
        let g = masked_mse(&a, &b, 1, &[true, false, true]).unwrap().backward();
        let g = g.get(&a).unwrap();
        assert_eq!(g.at(&[0, 1, 0]), 0.0);
        assert_eq!(g.at(&[0, 1, 1]), 0.0);
        assert!(g.at(&[0, 2, 1]) > 0.0);
    }
}
