//! Finite-difference checks for every differentiable op.

use partret_autograd::gradcheck::check_gradients;
use partret_autograd::{Tensor, Var};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

/// Deterministic pseudo-random fill (no RNG dependency in this crate).
fn fill(shape: &[usize], seed: u64) -> Tensor {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape.to_vec(), |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

/// Weighted sum so that every output element gets a distinct upstream gradient.
fn probe(y: &Var, seed: u64) -> Var {
    y.mul(&Var::constant(fill(y.shape(), seed))).sum_all()
}

fn assert_ok(name: &str, inputs: &[Tensor], f: impl Fn(&[Var]) -> Var) {
    for r in check_gradients(inputs, f, STEP, 1e-6) {
        assert!(
            r.max_rel_error < TOL,
            "{name}: input {} element {} analytic {} numeric {} (rel {})",
            r.input,
            r.worst_element,
            r.analytic,
            r.numeric,
            r.max_rel_error
        );
    }
}

#[test]
fn broadcasting_arithmetic() {
    let a = fill(&[2, 3, 4], 1);
    let b = fill(&[3, 1], 2).map(|x| x + 2.5);
    assert_ok("add", &[a.clone(), b.clone()], |v| probe(&v[0].add(&v[1]), 9));
    assert_ok("sub", &[a.clone(), b.clone()], |v| probe(&v[0].sub(&v[1]), 9));
    assert_ok("mul", &[a.clone(), b.clone()], |v| probe(&v[0].mul(&v[1]), 9));
    assert_ok("div", &[a.clone(), b.clone()], |v| probe(&v[0].div(&v[1]), 9));
    assert_ok("div-rev", &[b, a.map(|x| x + 3.0)], |v| probe(&v[0].div(&v[1]), 9));
}

#[test]
fn unary_functions() {
    let x = fill(&[5, 3], 3);
    let pos = x.map(|v| v.abs() + 0.3);
    assert_ok("sqr", &[x.clone()], |v| probe(&v[0].sqr(), 4));
    assert_ok("sqrt", &[pos.clone()], |v| probe(&v[0].sqrt(), 4));
    assert_ok("exp", &[x.clone()], |v| probe(&v[0].exp(), 4));
    assert_ok("sin", &[x.clone()], |v| probe(&v[0].sin(), 4));
    assert_ok("cos", &[x.clone()], |v| probe(&v[0].cos(), 4));
    assert_ok("relu", &[x.clone()], |v| probe(&v[0].relu(), 4));
    assert_ok("leaky", &[x.clone()], |v| probe(&v[0].leaky_relu(0.2), 4));
    assert_ok("sigmoid", &[x.clone()], |v| probe(&v[0].sigmoid(), 4));
    assert_ok("tanh", &[x.clone()], |v| probe(&v[0].tanh(), 4));
    assert_ok("scalar", &[x.clone()], |v| probe(&v[0].mul_scalar(-3.0).add_scalar(1.0).neg(), 4));
    assert_ok("clamp", &[x], |v| probe(&v[0].clamp_min(0.1), 4));
}

#[test]
fn matrix_products() {
    assert_ok("matmul-shared", &[fill(&[2, 3, 4], 5), fill(&[4, 5], 6)], |v| probe(&v[0].matmul(&v[1]), 7));
    assert_ok("matmul-batched", &[fill(&[3, 2, 4], 5), fill(&[3, 4, 2], 6)], |v| probe(&v[0].matmul(&v[1]), 7));
    assert_ok("attention-like", &[fill(&[2, 5, 3], 8)], |v| {
        let q = &v[0];
        probe(&q.matmul(&q.transpose_last()).softmax_last().matmul(q), 1)
    });
}

#[test]
fn layout_ops() {
    let x = fill(&[2, 3, 4], 11);
    assert_ok("reshape", &[x.clone()], |v| probe(&v[0].reshape([6, 4]), 1));
    assert_ok("permute", &[x.clone()], |v| probe(&v[0].permute(&[2, 0, 1]), 1));
    assert_ok("narrow", &[x.clone()], |v| probe(&v[0].narrow(1, 1, 2), 1));
    assert_ok("index_select", &[x.clone()], |v| probe(&v[0].index_select(2, &[3, 0, 3]), 1));
    assert_ok("concat", &[x.clone(), fill(&[2, 1, 4], 12)], |v| probe(&Var::concat(&[v[0].clone(), v[1].clone()], 1), 1));
    assert_ok("broadcast", &[fill(&[3, 1], 13)], |v| probe(&v[0].broadcast_to(&[2, 3, 5]), 1));
    assert_ok("sum_axis", &[x.clone()], |v| probe(&v[0].sum_axis(1), 1));
    assert_ok("mean_axis", &[x.clone()], |v| probe(&v[0].mean_axis(2), 1));
    assert_ok("mean_all", &[x.clone()], |v| v[0].sqr().mean_all());
    assert_ok("cumsum", &[x.clone()], |v| probe(&v[0].cumsum(1), 1));
    assert_ok("softmax", &[x], |v| probe(&v[0].softmax_last(), 1));
}

#[test]
fn temporal_ops() {
    let x = fill(&[2, 4, 9], 21);
    let w = fill(&[6, 2, 5], 22);
    let b = fill(&[6], 23);
    for (stride, pad) in [(1, 2), (2, 2), (2, 0), (3, 1)] {
        assert_ok("conv1d", &[x.clone(), w.clone(), b.clone()], |v| {
            probe(&v[0].conv1d(&v[1], Some(&v[2]), stride, pad, 2), 24)
        });
    }
    let w1 = fill(&[3, 4, 3], 25);
    assert_ok("conv1d-nobias", &[x.clone(), w1], |v| probe(&v[0].conv1d(&v[1], None, 2, 1, 1), 26));
    assert_ok("upsample2", &[x.clone()], |v| probe(&v[0].upsample_linear(2), 27));
    assert_ok("upsample4", &[x.clone()], |v| probe(&v[0].upsample_linear(4), 27));
    assert_ok("maxpool", &[x], |v| probe(&v[0].max_pool_last(2), 28));
}

#[test]
fn quaternion_ops() {
    let a = fill(&[3, 2, 4], 31);
    let b = fill(&[3, 2, 4], 32);
    let v = fill(&[3, 2, 3], 33);
    assert_ok("quat_mul", &[a.clone(), b], |x| probe(&x[0].quat_mul(&x[1]), 34));
    assert_ok("quat_rotate", &[a.clone(), v], |x| probe(&x[0].quat_rotate(&x[1]), 35));
    assert_ok("normalize", &[a], |x| probe(&x[0].normalize_last(1e-8), 36));
}

#[test]
fn shared_subexpressions_accumulate() {
    assert_ok("reuse", &[fill(&[4], 41)], |v| {
        let y = v[0].sin();
        probe(&y.mul(&y).add(&y.exp()), 42)
    });
}
