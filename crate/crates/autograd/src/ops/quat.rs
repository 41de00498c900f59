//! Quaternion primitives on `[..., 4]` tensors (Hamilton, `w` first).

use crate::tensor::Tensor;
use crate::var::Var;

#[inline]
pub fn hamilton(a: &[f64], b: &[f64]) -> [f64; 4] {
    let (aw, ax, ay, az) = (a[0], a[1], a[2], a[3]);
    let (bw, bx, by, bz) = (b[0], b[1], b[2], b[3]);
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

#[inline]
fn conj(q: &[f64]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `v + 2w(u×v) + 2u×(u×v)`; equals `q v q*` when `q` is unit.
#[inline]
pub fn rotate(q: &[f64], v: &[f64]) -> [f64; 3] {
    let w = q[0];
    let u = [q[1], q[2], q[3]];
    let v = [v[0], v[1], v[2]];
    let uv = cross(u, v);
    let uuv = cross(u, uv);
    [
        v[0] + 2.0 * (w * uv[0] + uuv[0]),
        v[1] + 2.0 * (w * uv[1] + uuv[1]),
        v[2] + 2.0 * (w * uv[2] + uuv[2]),
    ]
}

impl Var {
    /// Hamilton product of matching `[..., 4]` tensors.
    pub fn quat_mul(&self, other: &Var) -> Var {
        assert_eq!(self.shape(), other.shape(), "quat_mul shape mismatch");
        assert_eq!(self.shape().last(), Some(&4), "quaternions need a trailing axis of 4");
        let (a, b) = (self.value().clone(), other.value().clone());
        let mut out = Vec::with_capacity(a.numel());
        for (qa, qb) in a.data().chunks(4).zip(b.data().chunks(4)) {
            out.extend_from_slice(&hamilton(qa, qb));
        }
        let shape = a.shape().to_vec();
        Var::from_op(
            Tensor::new(shape.clone(), out),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let mut ga = Vec::with_capacity(g.numel());
                let mut gb = Vec::with_capacity(g.numel());
                for ((gq, qa), qb) in g.data().chunks(4).zip(a.data().chunks(4)).zip(b.data().chunks(4)) {
                    // Right/left multiplication matrices are adjoint to
                    // multiplication by the conjugate.
                    ga.extend_from_slice(&hamilton(gq, &conj(qb)));
                    gb.extend_from_slice(&hamilton(&conj(qa), gq));
                }
                vec![Some(Tensor::new(shape.clone(), ga)), Some(Tensor::new(shape.clone(), gb))]
            }),
        )
    }

    /// Rotates `[..., 3]` vectors by matching `[..., 4]` quaternions.
    pub fn quat_rotate(&self, v: &Var) -> Var {
        let qs = self.shape();
        let vs = v.shape();
        assert_eq!(qs.last(), Some(&4));
        assert_eq!(vs.last(), Some(&3));
        assert_eq!(qs[..qs.len() - 1], vs[..vs.len() - 1], "quat_rotate leading shapes");
        let (q, vv) = (self.value().clone(), v.value().clone());
        let mut out = Vec::with_capacity(vv.numel());
        for (qq, x) in q.data().chunks(4).zip(vv.data().chunks(3)) {
            out.extend_from_slice(&rotate(qq, x));
        }
        let (q_shape, v_shape) = (qs.to_vec(), vs.to_vec());
        Var::from_op(
            Tensor::new(v_shape.clone(), out),
            vec![self.clone(), v.clone()],
            Box::new(move |g| {
                let mut gq = Vec::with_capacity(q.numel());
                let mut gv = Vec::with_capacity(vv.numel());
                for ((gg, qq), x) in g.data().chunks(3).zip(q.data().chunks(4)).zip(vv.data().chunks(3)) {
                    let w = qq[0];
                    let u = [qq[1], qq[2], qq[3]];
                    let x = [x[0], x[1], x[2]];
                    let gg = [gg[0], gg[1], gg[2]];
                    // d/dv: (I - 2w[u]x + 2[u]x^2) g
                    let ug = cross(u, gg);
                    let uug = cross(u, ug);
                    gv.extend_from_slice(&[
                        gg[0] - 2.0 * w * ug[0] + 2.0 * uug[0],
                        gg[1] - 2.0 * w * ug[1] + 2.0 * uug[1],
                        gg[2] - 2.0 * w * ug[2] + 2.0 * uug[2],
                    ]);
                    let dw = 2.0 * dot3(gg, cross(u, x));
                    let xg = cross(x, gg);
                    let (ux, gu, gx) = (dot3(u, x), dot3(gg, u), dot3(gg, x));
                    gq.extend_from_slice(&[
                        dw,
                        2.0 * (w * xg[0] + ux * gg[0] + gu * x[0] - 2.0 * gx * u[0]),
                        2.0 * (w * xg[1] + ux * gg[1] + gu * x[1] - 2.0 * gx * u[1]),
                        2.0 * (w * xg[2] + ux * gg[2] + gu * x[2] - 2.0 * gx * u[2]),
                    ]);
                }
                vec![Some(Tensor::new(q_shape.clone(), gq)), Some(Tensor::new(v_shape.clone(), gv))]
            }),
        )
    }

    /// Scales each trailing-axis vector to unit length; `eps` keeps the
    /// gradient finite near zero.
    pub fn normalize_last(&self, eps: f64) -> Var {
        let norm = self.sqr().sum_axis(self.shape().len() - 1).add_scalar(eps).sqrt();
        self.div(&norm)
    }
}
