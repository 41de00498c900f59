use partret_autograd::{Module, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::body_parts::{build_mask, positional_table, BodyPartition};
use crate::motion_io::synthetic::{biped, quadruped, tiny_biped, Proportions};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn zero_params(m: &mut impl Module) {
    for (_, v) in m.params_mut() {
        *v = Var::param(Tensor::zeros(v.shape().to_vec()));
    }
}

fn two_parts() -> BodyPartition {
    BodyPartition::new(vec!["a".into(), "b".into()], vec![vec![0, 1], vec![2, 3]], 4).unwrap()
}

#[test]
fn zero_embedding_is_the_positional_table() {
    let p = two_parts();
    let cfg = NetConfig::tiny();
    let mut enc = MotionEncoder::new(&cfg, &p, &mut rng()).unwrap();
    zero_params(&mut enc.embed);
    let x = enc.embed_joints(&Var::constant(Tensor::zeros([1, 2, 5, 4])));
    let pe = positional_table(5, cfg.embed_dim, cfg.pe_basis).unwrap();
    for t in 0..2 {
        for j in 0..5 {
            for c in 0..cfg.embed_dim {
                assert_eq!(x.value().at(&[0, t, j, c]), pe.at(&[j, c]));
            }
        }
    }
}

#[test]
fn same_rotation_differs_by_positional_offset() {
    let p = two_parts();
    let cfg = NetConfig::tiny();
    let enc = MotionEncoder::new(&cfg, &p, &mut rng()).unwrap();
    let x = enc.embed_joints(&Var::constant(Tensor::from_fn([1, 1, 5, 4], |i| if i % 4 == 0 { 1.0 } else { 0.0 })));
    let pe = positional_table(5, cfg.embed_dim, cfg.pe_basis).unwrap();
    for c in 0..cfg.embed_dim {
        let diff = x.value().at(&[0, 0, 1, c]) - x.value().at(&[0, 0, 3, c]);
        assert!((diff - (pe.at(&[1, c]) - pe.at(&[3, c]))).abs() < 1e-12);
    }
}

#[test]
fn zero_logits_give_uniform_weights() {
    // One part holding one joint: token, joint and velocity rows.
    let p = BodyPartition::new(vec!["only".into()], vec![vec![0]], 1).unwrap();
    let d = 4;
    let mut layer = AttentionLayer::new(d, &mut rng());
    zero_params(&mut layer.query);
    zero_params(&mut layer.key);
    let mut r = rng();
    let x = Var::constant(random(&[1, 1, 2, d], &mut r));
    let tokens = Var::constant(random(&[1, d], &mut r));
    let out = pan_forward(&x, &tokens, std::slice::from_ref(&layer), &build_mask(&p, true).tensor());
    let w = out.weights[0].value();
    for c in 0..3 {
        assert!((w.at(&[0, 0, 0, c]) - 1.0 / 3.0).abs() < 1e-15);
    }
    let z = Var::concat(&[tokens.reshape([1, 1, 1, d]), x.clone()], 2);
    let v = layer.value.forward(&z).value().clone();
    for c in 0..d {
        let mean = (v.at(&[0, 0, 0, c]) + v.at(&[0, 0, 1, c]) + v.at(&[0, 0, 2, c])) / 3.0;
        assert!((out.tokens.value().at(&[0, 0, 0, c]) - mean).abs() < 1e-12);
    }
}

#[test]
fn token_and_joint_split_evenly_without_velocity_row() {
    // Two rows (token, joint) with constant logits: 0.5 each.
    let d = 2;
    let mut layer = AttentionLayer::new(d, &mut rng());
    zero_params(&mut layer.query);
    zero_params(&mut layer.key);
    let x = Var::constant(Tensor::new([1, 1, 1, d], vec![0.3, -0.7]));
    let tokens = Var::constant(Tensor::new([1, d], vec![1.0, 2.0]));
    let out = pan_forward(&x, &tokens, std::slice::from_ref(&layer), &Tensor::zeros([2, 2]));
    let w = out.weights[0].value();
    assert_eq!((w.at(&[0, 0, 0, 0]), w.at(&[0, 0, 0, 1])), (0.5, 0.5));
}

/// Per-frame, per-row attention with explicit exponentials.
fn naive_pan(x: &Tensor, tokens: &Tensor, layers: &[AttentionLayer], mask: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let (t, r, d) = (x.dim(1), x.dim(2), x.dim(3));
    let n = tokens.dim(0);
    let s = n + r;
    let proj = |l: &Linear, row: &[f64]| -> Vec<f64> {
        let (w, b) = (l.weight.value(), l.bias.value());
        (0..d).map(|o| b.at(&[o]) + (0..d).map(|i| row[i] * w.at(&[i, o])).sum::<f64>()).collect()
    };
    (0..t)
        .map(|f| {
            let mut z: Vec<Vec<f64>> = (0..n)
                .map(|k| (0..d).map(|c| tokens.at(&[k, c])).collect())
                .chain((0..r).map(|j| (0..d).map(|c| x.at(&[0, f, j, c])).collect()))
                .collect();
            for l in layers {
                let q: Vec<Vec<f64>> = z.iter().map(|row| proj(&l.query, row)).collect();
                let k: Vec<Vec<f64>> = z.iter().map(|row| proj(&l.key, row)).collect();
                let v: Vec<Vec<f64>> = z.iter().map(|row| proj(&l.value, row)).collect();
                z = (0..s)
                    .map(|i| {
                        let e: Vec<f64> = (0..s)
                            .map(|j| {
                                let dot: f64 = (0..d).map(|c| q[i][c] * k[j][c]).sum();
                                ((dot + mask.at(&[i, j])) / (d as f64).sqrt()).exp()
                            })
                            .collect();
                        let total: f64 = e.iter().sum();
                        (0..d).map(|c| (0..s).map(|j| e[j] / total * v[j][c]).sum()).collect()
                    })
                    .collect();
            }
            z.truncate(n);
            z
        })
        .collect()
}

#[test]
fn pan_matches_naive_oracle() {
    let p = two_parts();
    let d = 6;
    let mut r = rng();
    let layers: Vec<AttentionLayer> = (0..2).map(|_| AttentionLayer::new(d, &mut r)).collect();
    let x = random(&[1, 3, 5, d], &mut r);
    let tokens = random(&[2, d], &mut r);
    let mask = build_mask(&p, true).tensor();
    let out = pan_forward(&Var::constant(x.clone()), &Var::constant(tokens.clone()), &layers, &mask);
    let oracle = naive_pan(&x, &tokens, &layers, &mask);
    for (f, rows) in oracle.iter().enumerate() {
        for (k, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((out.tokens.value().at(&[0, f, k, c]) - v).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn masked_weights_are_exactly_zero() {
    let p = two_parts();
    let cfg = NetConfig::tiny();
    let enc = MotionEncoder::new(&cfg, &p, &mut rng()).unwrap();
    let m = Var::constant(random(&[2, 4, 5, 4], &mut rng()));
    let out = enc.attend(&m).unwrap();
    let mask = build_mask(&p, true);
    for w in &out.weights {
        let w = w.value();
        for b in 0..2 {
            for t in 0..4 {
                for i in 0..mask.size {
                    let row: f64 = (0..mask.size).map(|j| w.at(&[b, t, i, j])).sum();
                    assert!((row - 1.0).abs() < 1e-12);
                    for j in 0..mask.size {
                        if !mask.is_open(i, j) {
                            assert_eq!(w.at(&[b, t, i, j]), 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn encoder_and_decoder_shapes() {
    let mut r = rng();
    for skel in [biped("b", Proportions::default()), quadruped("q", Proportions::default())] {
        for preset in ["humanoid6", "biped-quad3"] {
            let Ok(p) = BodyPartition::preset(preset, &skel) else { continue };
            let cfg = NetConfig::tiny();
            let model = ModelParams::new(&cfg, &p, &mut r).unwrap();
            let rows = skel.num_joints() + 1;
            let m = Var::constant(random(&[1, 64, rows, 4], &mut r));
            let h = model.encode_motion(&m).unwrap();
            assert_eq!(h.shape(), [1, p.len() * cfg.embed_dim, 16]);
            let s = model.encode_skeleton(&skel).unwrap();
            assert_eq!(s.shape(), [1, p.len(), cfg.embed_dim]);
            assert_eq!(model.decode(&h, &s).unwrap().shape(), [1, 64, rows, 4]);
        }
    }
}

#[test]
fn bad_length_is_rejected() {
    let p = two_parts();
    let enc = MotionEncoder::new(&NetConfig::tiny(), &p, &mut rng()).unwrap();
    let m = Var::constant(Tensor::zeros([1, 6, 5, 4]));
    assert!(matches!(enc.forward(&m), Err(crate::Error::BadLength(6))));
}

#[test]
fn zero_discriminator_scores_one_half() {
    let cfg = NetConfig::tiny();
    let mut disc = Discriminator::new(&cfg, 5, &mut rng());
    zero_params(&mut disc);
    let out = disc.forward(&Var::constant(random(&[3, 16, 5, 4], &mut rng()))).unwrap();
    assert_eq!(out.value().data(), [0.5, 0.5, 0.5]);
}

#[test]
fn zero_skeleton_encoder_is_bias_path() {
    let p = two_parts();
    let cfg = NetConfig::tiny();
    let mut enc = SkeletonEncoder::new(&cfg, &p, &mut rng());
    for (name, v) in enc.params_mut() {
        let value = if name.ends_with("l2.b") { Tensor::full(v.shape().to_vec(), 0.25) } else { Tensor::zeros(v.shape().to_vec()) };
        *v = Var::param(value);
    }
    let code = enc.forward(&tiny_biped("t", Proportions::default())).unwrap();
    assert!(code.value().data().iter().all(|&v| v == 0.25));
}

#[test]
fn skeleton_code_changes_only_in_touched_parts() {
    let p = two_parts();
    let enc = SkeletonEncoder::new(&NetConfig::tiny(), &p, &mut rng());
    let a = tiny_biped("a", Proportions::default());
    let mut offsets = a.offsets.clone();
    offsets[3][1] *= 2.0;
    let b = a.with_offsets("b", offsets).unwrap();
    let (ca, cb) = (enc.forward(&a).unwrap(), enc.forward(&b).unwrap());
    let d = NetConfig::tiny().embed_dim;
    for c in 0..d {
        assert_eq!(ca.value().at(&[0, 0, c]), cb.value().at(&[0, 0, c]));
    }
    assert!((0..d).any(|c| ca.value().at(&[0, 1, c]) != cb.value().at(&[0, 1, c])));
    let scaled = a.scaled("s", 2.0).unwrap();
    assert_ne!(enc.forward(&scaled).unwrap().value(), ca.value());
}

#[test]
fn batch_items_are_independent() {
    let p = two_parts();
    let cfg = NetConfig::tiny();
    let mut r = rng();
    let model = ModelParams::new(&cfg, &p, &mut r).unwrap();
    let x = random(&[2, 8, 5, 4], &mut r);
    let both = model.encode_motion(&Var::constant(x.clone())).unwrap();
    let second = Var::constant(x).narrow(0, 1, 1);
    let alone = model.encode_motion(&second).unwrap();
    assert!(both.narrow(0, 1, 1).value().max_abs_diff(alone.value()) < 1e-12);
}

#[test]
fn part_isolation_with_one_attention_layer() {
    let p = two_parts();
    let cfg = NetConfig { pan_layers: 1, ..NetConfig::tiny() };
    let mut r = rng();
    let enc = MotionEncoder::new(&cfg, &p, &mut r).unwrap();
    let x = random(&[1, 8, 5, 4], &mut r);
    let mut y = x.clone();
    for t in 0..8 {
        for c in 0..4 {
            y.set(&[0, t, 2, c], r.gen_range(-1.0..1.0));
        }
    }
    let hx = enc.forward(&Var::constant(x)).unwrap();
    let hy = enc.forward(&Var::constant(y)).unwrap();
    let d = cfg.embed_dim;
    // Part 0 channels come first.
    assert_eq!(hx.narrow(1, 0, d).value(), hy.narrow(1, 0, d).value());
    assert_ne!(hx.narrow(1, d, d).value(), hy.narrow(1, d, d).value());
}

#[test]
fn constant_input_gives_constant_interior() {
    let p = two_parts();
    let cfg = NetConfig { pan_stage2: false, ..NetConfig::tiny() };
    let enc = MotionEncoder::new(&cfg, &p, &mut rng()).unwrap();
    let frame = random(&[1, 1, 5, 4], &mut rng());
    let m = Var::constant(frame).broadcast_to(&[1, 64, 5, 4]);
    let h = enc.forward(&m).unwrap();
    let v = h.value();
    let pad = cfg.kernel;
    for c in 0..v.dim(1) {
        for t in pad..16 - pad {
            assert!((v.at(&[0, c, t]) - v.at(&[0, c, pad])).abs() < 1e-12);
        }
    }
}
