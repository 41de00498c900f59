use crate::tensor::{numel, Tensor};
use crate::var::Var;

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

impl Var {
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Var {
        let shape = shape.into();
        let orig = self.shape().to_vec();
        Var::from_op(
            self.value().reshape(shape),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.reshape(orig.clone()))]),
        )
    }

    pub fn permute(&self, perm: &[usize]) -> Var {
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Var::from_op(
            self.value().permute(perm),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.permute(&inverse))]),
        )
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Var {
        let r = self.shape().len();
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var {
        let orig = self.shape().to_vec();
        Var::from_op(
            self.value().broadcast_to(shape),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.sum_to_shape(&orig))]),
        )
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow {start}+{len} beyond {}", shape[axis]);
        self.index_select(axis, &(start..start + len).collect::<Vec<_>>())
    }

    /// Gathers entries along `axis` (indices may repeat).
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split(&shape, axis);
        let src = self.value().data();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &ix in indices {
                assert!(ix < n, "index {ix} out of range {n}");
                let base = (o * n + ix) * inner;
                data.extend_from_slice(&src[base..base + inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = indices.len();
        let indices = indices.to_vec();
        Var::from_op(
            Tensor::new(out_shape, data),
            vec![self.clone()],
            Box::new(move |g| {
                let mut acc = vec![0.0; outer * n * inner];
                let gd = g.data();
                let k = indices.len();
                for o in 0..outer {
                    for (j, &ix) in indices.iter().enumerate() {
                        let src = (o * k + j) * inner;
                        let dst = (o * n + ix) * inner;
                        for i in 0..inner {
                            acc[dst + i] += gd[src + i];
                        }
                    }
                }
                vec![Some(Tensor::new(shape.clone(), acc))]
            }),
        )
    }

    pub fn concat(parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let first = parts[0].shape().to_vec();
        for p in parts {
            let s = p.shape();
            assert_eq!(s.len(), first.len());
            for a in 0..s.len() {
                assert!(a == axis || s[a] == first[a], "concat shape mismatch {s:?} vs {first:?}");
            }
        }
        let outer = numel(&first[..axis]);
        let inner = numel(&first[axis + 1..]);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                let base = o * len * inner;
                data.extend_from_slice(&p.value().data()[base..base + len * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        Var::from_op(
            Tensor::new(shape, data),
            parts.to_vec(),
            Box::new(move |g| {
                let gd = g.data();
                let mut outs: Vec<Vec<f64>> =
                    lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (out, &len) in outs.iter_mut().zip(&lens) {
                        out.extend_from_slice(&gd[pos..pos + len * inner]);
                        pos += len * inner;
                    }
                }
                outs.into_iter()
                    .zip(&shapes)
                    .map(|(d, s)| Some(Tensor::new(s.clone(), d)))
                    .collect()
            }),
        )
    }

    pub fn sum_all(&self) -> Var {
        let shape = self.shape().to_vec();
        Var::from_op(
            Tensor::scalar(self.value().sum()),
            vec![self.clone()],
            Box::new(move |g| vec![Some(Tensor::full(shape.clone(), g.item()))]),
        )
    }

    pub fn mean_all(&self) -> Var {
        let n = self.value().numel() as f64;
        self.sum_all().mul_scalar(1.0 / n)
    }

    /// Sums along `axis`, keeping it with length 1.
    pub fn sum_axis(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split(&shape, axis);
        let src = self.value().data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += src[(o * n + k) * inner + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        Var::from_op(
            Tensor::new(out_shape, data),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.broadcast_to(&shape))]),
        )
    }

    pub fn mean_axis(&self, axis: usize) -> Var {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis).mul_scalar(1.0 / n)
    }

    /// Inclusive prefix sum along `axis`.
    pub fn cumsum(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split(&shape, axis);
        let scan = move |src: &[f64], reverse: bool| {
            let mut out = src.to_vec();
            for o in 0..outer {
                for i in 0..inner {
                    let mut acc = 0.0;
                    for step in 0..n {
                        let k = if reverse { n - 1 - step } else { step };
                        let ix = (o * n + k) * inner + i;
                        acc += src[ix];
                        out[ix] = acc;
                    }
                }
            }
            out
        };
        let data = scan(self.value().data(), false);
        Var::from_op(
            Tensor::new(shape.clone(), data),
            vec![self.clone()],
            Box::new(move |g| vec![Some(Tensor::new(shape.clone(), scan(g.data(), true)))]),
        )
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Var {
        let shape = self.shape().to_vec();
        let n = *shape.last().expect("softmax on scalar");
        let src = self.value().data();
        let mut out = vec![0.0; src.len()];
        for (row_in, row_out) in src.chunks(n).zip(out.chunks_mut(n)) {
            let m = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (o, &x) in row_out.iter_mut().zip(row_in) {
                *o = (x - m).exp();
                s += *o;
            }
            for o in row_out.iter_mut() {
                *o /= s;
            }
        }
        let y = Tensor::new(shape.clone(), out);
        let yc = y.clone();
        Var::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0; g.numel()];
                for ((gr, yr), dr) in g.data().chunks(n).zip(yc.data().chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = yi * (gi - dot);
                    }
                }
                vec![Some(Tensor::new(shape.clone(), dx))]
            }),
        )
    }
}
