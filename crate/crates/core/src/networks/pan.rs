use partret_autograd::{Tensor, Var};

use super::layers::AttentionLayer;

/// Result of [`pan_forward`].
#[derive(Clone, Debug)]
pub struct PanOutput {
    /// Token rows of the last layer, `[B, T, N, d]`.
    pub tokens: Var,
    /// Softmax weights of every layer, `[B, T, S, S]` with `S = N + R`.
    pub weights: Vec<Var>,
}

/// Masked single-head attention over `[tokens; x]` per frame.
///
/// `x` is `[B, T, R, d]`, `tokens` is `[N, d]` and `mask` is the additive
/// `[N + R, N + R]` mask. Each layer computes
/// `softmax((Q K^T + U) / sqrt(d)) V` and feeds its output to the next.
pub fn pan_forward(x: &Var, tokens: &Var, layers: &[AttentionLayer], mask: &Tensor) -> PanOutput {
    let s = x.shape();
    let (b, t, d) = (s[0], s[1], s[3]);
    let n = tokens.shape()[0];
    assert_eq!(tokens.shape()[1], d, "token width must match the embedding");
    assert_eq!(mask.shape(), [n + s[2], n + s[2]], "mask size");
    let mut z = Var::concat(&[tokens.reshape([1, 1, n, d]).broadcast_to(&[b, t, n, d]), x.clone()], 2);
    let mask = Var::constant(mask.clone());
    let scale = 1.0 / (d as f64).sqrt();
    let mut weights = Vec::with_capacity(layers.len());
    for layer in layers {
        let q = layer.query.forward(&z);
        let k = layer.key.forward(&z);
        let v = layer.value.forward(&z);
        let w = q.matmul(&k.transpose_last()).add(&mask).mul_scalar(scale).softmax_last();
        z = w.matmul(&v);
        weights.push(w);
    }
    PanOutput { tokens: z.narrow(2, 0, n), weights }
}
