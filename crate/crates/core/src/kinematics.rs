//! Quaternion algebra, forward kinematics and root trajectory integration.
//!
//! Conventions: Hamilton product, `w` first, right-handed, `+y` up. Rotations
//! act on column vectors, so a parent-to-child chain composes as
//! `world(child) = world(parent) * local(child)`.
//!
//! [`fk`] and [`integrate_root`] are written against the autodiff layer so
//! the kinematic loss can push gradients through them; the plain-value
//! helpers at the bottom evaluate the same graph on constants.

use partret_autograd::{quat, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::motion_io::{MotionClip, SkeletonDef};

/// A rotation quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Rotation axis used by Euler channel orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n < 1e-12 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation of `angle` radians about a principal axis.
    pub fn about(axis: Axis, angle: f64) -> Self {
        let mut a = [0.0; 3];
        a[axis.index()] = 1.0;
        Self::from_axis_angle(a, angle)
    }

    /// Rotation about `+y`.
    pub fn from_yaw(angle: f64) -> Self {
        Self::about(Axis::Y, angle)
    }

    pub fn mul(self, other: Quat) -> Quat {
        Quat::from_array(quat::hamilton(&self.to_array(), &other.to_array()))
    }

    pub fn conj(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Unit quaternion in the same direction; a (near) zero input yields the
    /// identity and `false`.
    pub fn normalize_checked(self) -> (Quat, bool) {
        let n = self.norm();
        if n < 1e-12 || !n.is_finite() {
            (Self::IDENTITY, false)
        } else {
            (Quat::new(self.w / n, self.x / n, self.y / n, self.z / n), true)
        }
    }

    pub fn normalize(self) -> Quat {
        self.normalize_checked().0
    }

    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        quat::rotate(&self.to_array(), &v)
    }

    /// Composes principal-axis rotations in channel order, so the order
    /// `[Z, X, Y]` with angles `[a, b, c]` gives `Rz(a) * Rx(b) * Ry(c)`.
    pub fn from_euler(order: &[Axis], angles: &[f64]) -> Quat {
        assert_eq!(order.len(), angles.len());
        order
            .iter()
            .zip(angles)
            .fold(Quat::IDENTITY, |q, (&axis, &a)| q.mul(Quat::about(axis, a)))
    }

    /// Inverse of [`Quat::from_euler`] for a three-axis Tait-Bryan order.
    pub fn to_euler(self, order: [Axis; 3]) -> [f64; 3] {
        let m = self.normalize().to_matrix();
        let (i, j, k) = (order[0].index(), order[1].index(), order[2].index());
        assert!(i != j && j != k && i != k, "Euler order must use three distinct axes");
        let sign = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
        let sb = (sign * m[i][k]).clamp(-1.0, 1.0);
        let b = sb.asin();
        if sb.abs() < 1.0 - 1e-12 {
            let a = (-sign * m[j][k]).atan2(m[k][k]);
            let c = (-sign * m[i][j]).atan2(m[i][i]);
            [a, b, c]
        } else {
            // Gimbal lock: fold the last angle into the first.
            let a = (sign * m[k][j]).atan2(m[j][j]);
            [a, b, 0.0]
        }
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Splits `self = twist * swing`, where `twist` rotates about `+y` only.
    /// Returns `(yaw angle, swing)`.
    pub fn split_yaw(self) -> (f64, Quat) {
        let n = (self.w * self.w + self.y * self.y).sqrt();
        if n < 1e-9 {
            // Pure half-turn about a horizontal axis: the yaw is undefined.
            return (0.0, self);
        }
        let twist = Quat::new(self.w / n, 0.0, self.y / n, 0.0);
        let yaw = 2.0 * self.y.atan2(self.w);
        (wrap_angle(yaw), twist.conj().mul(self))
    }
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// World-frame joint positions, `[batch, frames, joints, 3]`.
#[derive(Clone, Debug)]
pub struct JointPositions(pub Tensor);

impl JointPositions {
    pub fn frames(&self) -> usize {
        self.0.dim(1)
    }

    pub fn joints(&self) -> usize {
        self.0.dim(2)
    }

    pub fn get(&self, batch: usize, frame: usize, joint: usize) -> [f64; 3] {
        let t = &self.0;
        [t.at(&[batch, frame, joint, 0]), t.at(&[batch, frame, joint, 1]), t.at(&[batch, frame, joint, 2])]
    }
}

/// Integrates per-frame root velocity `[batch, frames, 4]` (vx, vy, vz, yaw
/// rate) into world positions `[batch, frames, 3]` and accumulated yaw
/// `[batch, frames, 1]`.
///
/// The frame before the first one sits at the origin facing `+z`; each
/// displacement is expressed in the yaw frame of the preceding frame.
pub fn integrate_root(velocity: &Var) -> Result<(Var, Var)> {
    let s = velocity.shape();
    if s.len() != 3 || s[2] != 4 {
        return Err(shape_err(format!("root velocity must be [B, T, 4], got {s:?}")));
    }
    let (b, t) = (s[0], s[1]);
    let vx = velocity.narrow(2, 0, 1);
    let vy = velocity.narrow(2, 1, 1);
    let vz = velocity.narrow(2, 2, 1);
    let yaw = velocity.narrow(2, 3, 1).cumsum(1);
    let prev_yaw = if t > 1 {
        Var::concat(&[Var::constant(Tensor::zeros([b, 1, 1])), yaw.narrow(1, 0, t - 1)], 1)
    } else {
        Var::constant(Tensor::zeros([b, 1, 1]))
    };
    let (c, sn) = (prev_yaw.cos(), prev_yaw.sin());
    let dx = c.mul(&vx).add(&sn.mul(&vz));
    let dz = c.mul(&vz).sub(&sn.mul(&vx));
    let positions = Var::concat(&[dx, vy, dz], 2).cumsum(1);
    Ok((positions, yaw))
}

/// Yaw angles `[..., 1]` to quaternions `[..., 4]` about `+y`.
fn yaw_quats(yaw: &Var) -> Var {
    let half = yaw.mul_scalar(0.5);
    let zero = Var::constant(Tensor::zeros(yaw.shape().to_vec()));
    Var::concat(&[half.cos(), zero.clone(), half.sin(), zero], yaw.shape().len() - 1)
}

/// Forward kinematics for `rotations` `[B, T, J, 4]` and root velocity
/// `[B, T, 4]`, returning world positions `[B, T, J, 3]`.
///
/// The root is placed at the integrated trajectory plus its own offset and
/// oriented by the integrated yaw times its local rotation. Quaternions are
/// used as given; normalize them first if they may drift from unit length.
pub fn fk(rotations: &Var, velocity: &Var, skeleton: &SkeletonDef) -> Result<Var> {
    let s = rotations.shape();
    if s.len() != 4 || s[3] != 4 {
        return Err(shape_err(format!("rotations must be [B, T, J, 4], got {s:?}")));
    }
    let (b, t, j) = (s[0], s[1], s[2]);
    if j != skeleton.num_joints() {
        return Err(shape_err(format!(
            "rotations have {j} joints, skeleton `{}` has {}",
            skeleton.name,
            skeleton.num_joints()
        )));
    }
    if velocity.shape() != [b, t, 4] {
        return Err(shape_err(format!("velocity {:?} does not match rotations {s:?}", velocity.shape())));
    }
    let (root_pos, yaw) = integrate_root(velocity)?;
    let yaw_q = yaw_quats(&yaw);

    let offset = |k: usize| {
        let o = skeleton.offsets[k];
        Var::constant(Tensor::new([1, 1, 3], o.to_vec()).broadcast_to(&[b, t, 3]))
    };
    let mut world_rot: Vec<Var> = Vec::with_capacity(j);
    let mut world_pos: Vec<Var> = Vec::with_capacity(j);
    for k in 0..j {
        let local = rotations.narrow(2, k, 1).reshape([b, t, 4]);
        match skeleton.parents[k] {
            None => {
                world_rot.push(yaw_q.quat_mul(&local));
                world_pos.push(root_pos.add(&offset(k)));
            }
            Some(p) => {
                world_rot.push(world_rot[p].quat_mul(&local));
                world_pos.push(world_pos[p].add(&world_rot[p].quat_rotate(&offset(k))));
            }
        }
    }
    let stacked: Vec<Var> = world_pos.into_iter().map(|p| p.reshape([b, t, 1, 3])).collect();
    Ok(Var::concat(&stacked, 2))
}

/// Forward kinematics on plain data, one clip.
pub fn fk_clip(clip: &MotionClip) -> Result<JointPositions> {
    let (rot, vel) = clip.split_tensors();
    let t = clip.frames();
    let j = clip.skeleton.num_joints();
    let rot = Var::constant(rot.reshape([1, t, j, 4]));
    let vel = Var::constant(vel.reshape([1, t, 4]));
    Ok(JointPositions(fk(&rot, &vel, &clip.skeleton)?.value().clone()))
}

/// Root trajectory and yaw of one clip's velocity rows.
pub fn integrate_root_clip(clip: &MotionClip) -> (Vec<[f64; 3]>, Vec<f64>) {
    let (_, vel) = clip.split_tensors();
    let t = clip.frames();
    let (pos, yaw) = integrate_root(&Var::constant(vel.reshape([1, t, 4]))).expect("shape checked");
    let p = pos.value().data();
    let positions = (0..t).map(|i| [p[3 * i], p[3 * i + 1], p[3 * i + 2]]).collect();
    (positions, yaw.value().data().to_vec())
}
