use crate::tensor::Tensor;
use crate::var::Var;

/// `c = op(a) · op(b) + beta·c` for row-major slices, where `op` optionally transposes.
///
/// `a` is logically `m×k` and `b` is `k×n` after the transposes are applied.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every slice to exactly the extents the
    // strides describe, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Var {
    /// Matrix product over the last two axes.
    ///
    /// `rhs` is either a plain `k×n` matrix shared across all leading axes of
    /// `self`, or has the same leading (batch) axes as `self`.
    pub fn matmul(&self, rhs: &Var) -> Var {
        let a_shape = self.shape().to_vec();
        let b_shape = rhs.shape().to_vec();
        assert!(a_shape.len() >= 2 && b_shape.len() >= 2, "matmul needs matrices");
        let k = a_shape[a_shape.len() - 1];
        let m = a_shape[a_shape.len() - 2];
        assert_eq!(b_shape[b_shape.len() - 2], k, "matmul inner dims {a_shape:?} x {b_shape:?}");
        let n = b_shape[b_shape.len() - 1];

        if b_shape.len() == 2 {
            let rows = self.value().numel() / k;
            let mut out = vec![0.0; rows * n];
            gemm(rows, k, n, self.value().data(), false, rhs.value().data(), false, 0.0, &mut out);
            let mut out_shape = a_shape.clone();
            *out_shape.last_mut().unwrap() = n;
            let (a, b) = (self.value().clone(), rhs.value().clone());
            return Var::from_op(
                Tensor::new(out_shape, out),
                vec![self.clone(), rhs.clone()],
                Box::new(move |g| {
                    let mut ga = vec![0.0; rows * k];
                    gemm(rows, n, k, g.data(), false, b.data(), true, 0.0, &mut ga);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, rows, n, a.data(), true, g.data(), false, 0.0, &mut gb);
                    vec![
                        Some(Tensor::new(a.shape().to_vec(), ga)),
                        Some(Tensor::new(b.shape().to_vec(), gb)),
                    ]
                }),
            );
        }

        assert_eq!(
            a_shape[..a_shape.len() - 2],
            b_shape[..b_shape.len() - 2],
            "batched matmul needs equal batch axes"
        );
        let batch: usize = a_shape[..a_shape.len() - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        let (ad, bd) = (self.value().data(), rhs.value().data());
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &ad[i * m * k..(i + 1) * m * k],
                false,
                &bd[i * k * n..(i + 1) * k * n],
                false,
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let mut out_shape = a_shape.clone();
        *out_shape.last_mut().unwrap() = n;
        let (a, b) = (self.value().clone(), rhs.value().clone());
        Var::from_op(
            Tensor::new(out_shape, out),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let mut ga = vec![0.0; batch * m * k];
                let mut gb = vec![0.0; batch * k * n];
                for i in 0..batch {
                    let gi = &g.data()[i * m * n..(i + 1) * m * n];
                    gemm(
                        m,
                        n,
                        k,
                        gi,
                        false,
                        &b.data()[i * k * n..(i + 1) * k * n],
                        true,
                        0.0,
                        &mut ga[i * m * k..(i + 1) * m * k],
                    );
                    gemm(
                        k,
                        m,
                        n,
                        &a.data()[i * m * k..(i + 1) * m * k],
                        true,
                        gi,
                        false,
                        0.0,
                        &mut gb[i * k * n..(i + 1) * k * n],
                    );
                }
                vec![
                    Some(Tensor::new(a.shape().to_vec(), ga)),
                    Some(Tensor::new(b.shape().to_vec(), gb)),
                ]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1., 2., 3., 4.];
        let b = [5., 6., 7., 8.];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19., 22., 43., 50.]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26., 30., 38., 44.]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17., 23., 39., 53.]);
    }

    #[test]
    fn shared_weight_matmul_flattens_leading_axes() {
        let x = Var::constant(Tensor::from_fn([2, 3, 2], |i| i as f64));
        let w = Var::constant(Tensor::new([2, 1], vec![1., 10.]));
        let y = x.matmul(&w);
        assert_eq!(y.shape(), &[2, 3, 1]);
        assert_eq!(y.value().data(), &[10., 32., 54., 76., 98., 120.]);
    }
}
