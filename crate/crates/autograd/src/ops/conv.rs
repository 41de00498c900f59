use super::linalg::gemm;
use crate::tensor::Tensor;
use crate::var::Var;

#[derive(Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    t_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    groups: usize,
    t_out: usize,
}

impl ConvGeom {
    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }
    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }
    /// Column matrix rows per group.
    fn col_rows(&self) -> usize {
        self.cin_g() * self.kernel
    }
    fn src_t(&self, t_out: usize, k: usize) -> Option<usize> {
        let t = (t_out * self.stride + k) as isize - self.padding as isize;
        (t >= 0 && (t as usize) < self.t_in).then_some(t as usize)
    }
}

/// Unfolds one (batch, group) slice of `x` into a `(cin_g·k) × t_out` matrix.
fn im2col(x: &[f64], geo: &ConvGeom, b: usize, grp: usize, col: &mut [f64]) {
    let cin_g = geo.cin_g();
    for ci in 0..cin_g {
        let chan = grp * cin_g + ci;
        let row_base = &x[(b * geo.c_in + chan) * geo.t_in..][..geo.t_in];
        for k in 0..geo.kernel {
            let r = ci * geo.kernel + k;
            for t in 0..geo.t_out {
                col[r * geo.t_out + t] = geo.src_t(t, k).map_or(0.0, |s| row_base[s]);
            }
        }
    }
}

fn col2im(col: &[f64], geo: &ConvGeom, b: usize, grp: usize, dx: &mut [f64]) {
    let cin_g = geo.cin_g();
    for ci in 0..cin_g {
        let chan = grp * cin_g + ci;
        let base = (b * geo.c_in + chan) * geo.t_in;
        for k in 0..geo.kernel {
            let r = ci * geo.kernel + k;
            for t in 0..geo.t_out {
                if let Some(s) = geo.src_t(t, k) {
                    dx[base + s] += col[r * geo.t_out + t];
                }
            }
        }
    }
}

impl Var {
    /// 1-D convolution (cross-correlation) over `[batch, channels, time]`.
    ///
    /// `weight` is `[c_out, c_in / groups, kernel]`, `bias` is `[c_out]`.
    /// Input channels are split into `groups` contiguous blocks, each mapped to
    /// its own contiguous block of output channels.
    pub fn conv1d(
        &self,
        weight: &Var,
        bias: Option<&Var>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Var {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 3, "conv1d input must be [B, C, T], got {xs:?}");
        assert_eq!(ws.len(), 3, "conv1d weight must be [Cout, Cin/g, K], got {ws:?}");
        assert!(stride >= 1 && groups >= 1);
        let (batch, c_in, t_in) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[0], ws[2]);
        assert_eq!(c_in % groups, 0, "c_in {c_in} not divisible by groups {groups}");
        assert_eq!(c_out % groups, 0, "c_out {c_out} not divisible by groups {groups}");
        assert_eq!(ws[1], c_in / groups, "weight input channels");
        assert!(t_in + 2 * padding >= kernel, "input too short for kernel");
        let t_out = (t_in + 2 * padding - kernel) / stride + 1;
        let geo = ConvGeom { c_in, t_in, c_out, kernel, stride, padding, groups, t_out };
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[c_out], "conv1d bias shape");
        }

        let x = self.value().clone();
        let w = weight.value().clone();
        let (cout_g, rows) = (geo.cout_g(), geo.col_rows());
        let mut out = vec![0.0; batch * c_out * t_out];
        let mut col = vec![0.0; rows * t_out];
        for b in 0..batch {
            for g in 0..groups {
                im2col(x.data(), &geo, b, g, &mut col);
                let wg = &w.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
                let dst = &mut out[(b * c_out + g * cout_g) * t_out..][..cout_g * t_out];
                gemm(cout_g, rows, t_out, wg, false, &col, false, 0.0, dst);
            }
        }
        if let Some(bias) = bias {
            let bd = bias.value().data();
            for b in 0..batch {
                for c in 0..c_out {
                    for v in &mut out[(b * c_out + c) * t_out..][..t_out] {
                        *v += bd[c];
                    }
                }
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let has_bias = bias.is_some();
        Var::from_op(
            Tensor::new([batch, c_out, t_out], out),
            parents,
            Box::new(move |g| {
                let gd = g.data();
                let mut dx = vec![0.0; x.numel()];
                let mut dw = vec![0.0; w.numel()];
                let mut col = vec![0.0; rows * t_out];
                let mut dcol = vec![0.0; rows * t_out];
                for b in 0..batch {
                    for grp in 0..groups {
                        im2col(x.data(), &geo, b, grp, &mut col);
                        let go = &gd[(b * c_out + grp * cout_g) * t_out..][..cout_g * t_out];
                        let dwg = &mut dw[grp * cout_g * rows..(grp + 1) * cout_g * rows];
                        gemm(cout_g, t_out, rows, go, false, &col, true, 1.0, dwg);
                        let wg = &w.data()[grp * cout_g * rows..(grp + 1) * cout_g * rows];
                        gemm(rows, cout_g, t_out, wg, true, go, false, 0.0, &mut dcol);
                        col2im(&dcol, &geo, b, grp, &mut dx);
                    }
                }
                let mut grads = vec![
                    Some(Tensor::new(x.shape().to_vec(), dx)),
                    Some(Tensor::new(w.shape().to_vec(), dw)),
                ];
                if has_bias {
                    let mut db = vec![0.0; c_out];
                    for b in 0..batch {
                        for (c, acc) in db.iter_mut().enumerate() {
                            *acc += gd[(b * c_out + c) * t_out..][..t_out].iter().sum::<f64>();
                        }
                    }
                    grads.push(Some(Tensor::new([c_out], db)));
                }
                grads
            }),
        )
    }

    /// Linear interpolation along the last axis by an integer factor, using
    /// half-pixel centres with edge clamping (`align_corners = false`).
    pub fn upsample_linear(&self, factor: usize) -> Var {
        let shape = self.shape().to_vec();
        let t_in = *shape.last().unwrap();
        let t_out = t_in * factor;
        let rows = self.value().numel() / t_in;
        // (lo, hi, weight of hi) per output position
        let taps: Vec<(usize, usize, f64)> = (0..t_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(t_in - 1);
                let hi = (lo + 1).min(t_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect();
        let xd = self.value().data();
        let mut out = Vec::with_capacity(rows * t_out);
        for r in 0..rows {
            let row = &xd[r * t_in..(r + 1) * t_in];
            out.extend(taps.iter().map(|&(lo, hi, l)| (1.0 - l) * row[lo] + l * row[hi]));
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = t_out;
        Var::from_op(
            Tensor::new(out_shape, out),
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0; rows * t_in];
                for r in 0..rows {
                    let gr = &g.data()[r * t_out..(r + 1) * t_out];
                    let dr = &mut dx[r * t_in..(r + 1) * t_in];
                    for (&gi, &(lo, hi, l)) in gr.iter().zip(&taps) {
                        dr[lo] += (1.0 - l) * gi;
                        dr[hi] += l * gi;
                    }
                }
                vec![Some(Tensor::new(shape.clone(), dx))]
            }),
        )
    }

    /// Max pooling along the last axis with window `size` and equal stride;
    /// a trailing partial window is dropped.
    pub fn max_pool_last(&self, size: usize) -> Var {
        let shape = self.shape().to_vec();
        let t_in = *shape.last().unwrap();
        let t_out = t_in / size;
        assert!(t_out > 0, "max pool window {size} longer than input {t_in}");
        let rows = self.value().numel() / t_in;
        let xd = self.value().data();
        let mut out = Vec::with_capacity(rows * t_out);
        let mut argmax = Vec::with_capacity(rows * t_out);
        for r in 0..rows {
            for t in 0..t_out {
                let base = r * t_in + t * size;
                let mut best = base;
                for i in base + 1..base + size {
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = t_out;
        let n = self.value().numel();
        Var::from_op(
            Tensor::new(out_shape, out),
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0; n];
                for (&gi, &src) in g.data().iter().zip(&argmax) {
                    dx[src] += gi;
                }
                vec![Some(Tensor::new(shape.clone(), dx))]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_two_halves_length_with_half_kernel_padding() {
        let x = Var::constant(Tensor::zeros([1, 2, 64]));
        let w = Var::constant(Tensor::zeros([3, 2, 15]));
        let y = x.conv1d(&w, None, 2, 7, 1);
        assert_eq!(y.shape(), &[1, 3, 32]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = Tensor::from_fn([1, 1, 5], |i| i as f64 + 1.0);
        let w = Tensor::new([1, 1, 3], vec![1.0, 0.0, -1.0]);
        let y = Var::constant(x).conv1d(&Var::constant(w), None, 1, 1, 1);
        // padded input: 0 1 2 3 4 5 0
        assert_eq!(y.value().data(), &[-2.0, -2.0, -2.0, -2.0, 4.0]);
    }

    #[test]
    fn groups_do_not_mix_channels() {
        let mut x = Tensor::zeros([1, 4, 6]);
        for t in 0..6 {
            x.set(&[0, 0, t], 1.0);
        }
        let w = Tensor::ones([4, 2, 3]);
        let y = Var::constant(x).conv1d(&Var::constant(w), None, 1, 1, 2);
        for t in 0..6 {
            assert_eq!(y.value().at(&[0, 2, t]), 0.0);
            assert_eq!(y.value().at(&[0, 3, t]), 0.0);
            assert!(y.value().at(&[0, 0, t]) > 0.0);
        }
    }

    #[test]
    fn linear_upsample_matches_half_pixel_rule() {
        let x = Var::constant(Tensor::new([1, 3], vec![0.0, 1.0, 2.0]));
        let y = x.upsample_linear(2);
        let expect = [0.0, 0.25, 0.75, 1.25, 1.75, 2.0];
        for (a, b) in y.value().data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_picks_window_max() {
        let x = Var::constant(Tensor::new([1, 5], vec![1.0, 3.0, 2.0, -1.0, 9.0]));
        assert_eq!(x.max_pool_last(2).value().data(), &[3.0, 2.0]);
    }
}
