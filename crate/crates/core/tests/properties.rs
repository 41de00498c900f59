mod common;

use partret::body_parts::{build_mask, MASK_SENTINEL};
use partret::evaluation::{sample_by_velocity, VELOCITY_BINS};
use partret::kinematics::{fk_clip, integrate_root_clip, wrap_angle, Axis, Quat};
use partret::motion_io::synthetic::{biped, walk_clips, Proportions};
use partret::motion_io::{localize_and_clip, parse_bvh_str, write_bvh, MotionClip, NormStats, RawMotion};
use partret::networks::{MotionEncoder, NetConfig};
use partret_autograd::{Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn quat(rng: &mut ChaCha8Rng) -> Quat {
    Quat::from_array(random_unit_quat(rng))
}

fn same_rotation(a: Quat, b: Quat, tol: f64) -> bool {
    1.0 - a.dot(b).abs() < tol
}

const ORDERS: [[Axis; 3]; 6] = [
    [Axis::X, Axis::Y, Axis::Z],
    [Axis::X, Axis::Z, Axis::Y],
    [Axis::Y, Axis::X, Axis::Z],
    [Axis::Y, Axis::Z, Axis::X],
    [Axis::Z, Axis::X, Axis::Y],
    [Axis::Z, Axis::Y, Axis::X],
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_is_symmetric_with_open_diagonal(seed: u64, joints in 1usize..12, self_only: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts = rng.gen_range(1..=joints.min(5));
        let p = random_partition(joints, parts, &mut rng);
        let m = build_mask(&p, self_only);
        prop_assert_eq!(m.size, parts + joints + 1);
        for i in 0..m.size {
            prop_assert!(m.is_open(i, i));
            for j in 0..m.size {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                prop_assert!(m.get(i, j) == 0.0 || m.get(i, j) == MASK_SENTINEL);
            }
        }
        for k in 0..parts {
            for j in 0..=joints {
                prop_assert_eq!(m.is_open(k, parts + j), p.parts[k].contains(&j));
            }
        }
    }

    #[test]
    fn rotation_preserves_length(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = quat(&mut rng);
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
        let r = q.rotate(v);
        let len = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        prop_assert!((len(r) - len(v)).abs() < 1e-12);
        prop_assert!(q.mul(q.conj()).dot(Quat::IDENTITY) > 1.0 - 1e-12);
    }

    #[test]
    fn euler_round_trip(seed: u64, order in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = quat(&mut rng);
        let order = ORDERS[order];
        let back = Quat::from_euler(&order, &q.to_euler(order));
        prop_assert!(same_rotation(q, back, 1e-10));
    }

    #[test]
    fn yaw_split_recomposes(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = quat(&mut rng);
        let (yaw, swing) = q.split_yaw();
        prop_assert!(same_rotation(Quat::from_yaw(yaw).mul(swing), q, 1e-12));
        prop_assert!(swing.y.abs() < 1e-9);
    }

    #[test]
    fn fk_preserves_bone_lengths(seed: u64, joints in 1usize..9, frames in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = random_tree(joints, &mut rng);
        let data = Tensor::from_fn([frames, joints + 1, 4], |_| rng.gen_range(-1.0..1.0));
        let mut clip = MotionClip::new(skel.clone(), data, 1.0 / 30.0).unwrap();
        // Unit rotations; the velocity row stays arbitrary.
        for t in 0..frames {
            for j in 0..joints {
                let q = quat(&mut rng).to_array();
                for c in 0..4 {
                    clip.data.set(&[t, j, c], q[c]);
                }
            }
        }
        let pos = fk_clip(&clip).unwrap();
        for t in 0..frames {
            for j in 1..joints {
                let parent = skel.parents[j].unwrap();
                let (a, b) = (pos.get(0, t, j), pos.get(0, t, parent));
                let bone = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                let o = skel.offsets[j];
                let rest = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
                prop_assert!((bone - rest).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalization_round_trip(seed in 0u64..1000, clips in 1usize..4) {
        let skel = biped("b", Proportions::default());
        let set = walk_clips(&skel, clips, 8, seed);
        let stats = NormStats::compute(&set).unwrap();
        for c in &set {
            let back = stats.invert(&stats.apply(c).unwrap()).unwrap();
            for (x, y) in c.data.data().iter().zip(back.data.data()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn localized_velocity_integrates_to_trajectory(seed: u64, frames in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = biped("b", Proportions::default());
        let mut p = [rng.gen_range(-3.0..3.0), 1.0, rng.gen_range(-3.0..3.0)];
        let mut yaw: f64 = rng.gen_range(-3.0..3.0);
        let mut positions = Vec::new();
        let mut yaws = Vec::new();
        let mut rotations = Vec::new();
        for _ in 0..frames {
            positions.push(p);
            let tilt = Quat::from_euler(&[Axis::X, Axis::Z], &[rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)]);
            let mut row = vec![Quat::IDENTITY; skel.num_joints()];
            row[0] = Quat::from_yaw(yaw).mul(tilt);
            // The tilt carries a little twist of its own.
            yaws.push(row[0].split_yaw().0);
            rotations.push(row);
            for c in 0..3 {
                p[c] += rng.gen_range(-0.1..0.1);
            }
            yaw += rng.gen_range(-0.3..0.3);
        }
        let raw = RawMotion::new(skel, 1.0 / 30.0, positions.clone(), rotations).unwrap();
        let clip = &localize_and_clip(&raw, frames, 30).unwrap()[0];
        let (traj, headings) = integrate_root_clip(clip);
        let undo = Quat::from_yaw(-yaws[0]);
        for t in 0..frames {
            let d = [0, 1, 2].map(|c| positions[t][c] - positions[0][c]);
            let want = undo.rotate(d);
            for c in 0..3 {
                prop_assert!((traj[t][c] - want[c]).abs() < 1e-3, "frame {t}: {:?} vs {:?}", traj[t], want);
            }
            prop_assert!(wrap_angle(headings[t] - (yaws[t] - yaws[0])).abs() < 1e-6);
        }
    }

    #[test]
    fn velocity_sampling_is_stratified(seed: u64, clips in 10usize..40, frac in 0.1f64..1.0) {
        let skel = biped("b", Proportions::default());
        let set = walk_clips(&skel, clips, 8, seed % 1000);
        let n = ((clips as f64 * frac) as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = sample_by_velocity(&set, n, false, &mut rng).unwrap();
        prop_assert_eq!(picked.len(), n);
        let mut unique = picked.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), n);

        let speeds: Vec<f64> = set.iter().map(MotionClip::mean_speed).collect();
        let lo = speeds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / VELOCITY_BINS as f64;
        let bin = |s: f64| if width > 0.0 { (((s - lo) / width) as usize).min(VELOCITY_BINS - 1) } else { 0 };
        let mut size = [0usize; VELOCITY_BINS];
        let mut taken = [0usize; VELOCITY_BINS];
        for &s in &speeds {
            size[bin(s)] += 1;
        }
        for &i in &picked {
            taken[bin(speeds[i])] += 1;
        }
        // A stratum with clips left never trails another by more than one.
        for a in 0..VELOCITY_BINS {
            for b in 0..VELOCITY_BINS {
                if size[b] > taken[b] {
                    prop_assert!(taken[a] <= taken[b] + 1, "{:?} of {:?}", taken, size);
                }
            }
        }
    }

    #[test]
    fn bvh_write_parse_is_a_fixed_point(seed: u64, joints in 1usize..6, frames in 2usize..10, pos_last: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"];
        let orders: Vec<&str> = (0..joints).map(|_| names[rng.gen_range(0..6)]).collect();
        let (_, first) = parse_bvh_str(&bvh_text(&orders, frames, pos_last, &mut rng), "a").unwrap();
        let text = write_bvh(&first).unwrap();
        let (_, second) = parse_bvh_str(&text, "a").unwrap();
        prop_assert_eq!(write_bvh(&second).unwrap(), text);
        for (ra, rb) in first.rotations.iter().zip(&second.rotations) {
            for (a, b) in ra.iter().zip(rb) {
                prop_assert!(same_rotation(*a, *b, 1e-9));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attention_rows_are_distributions(seed: u64, joints in 2usize..8, self_only: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts = rng.gen_range(1..=joints.min(3));
        let p = random_partition(joints, parts, &mut rng);
        let cfg = NetConfig { token_self_only: self_only, ..NetConfig::tiny() };
        let enc = MotionEncoder::new(&cfg, &p, &mut rng).unwrap();
        let motion = Var::constant(Tensor::from_fn([1, 3, joints + 1, 4], |_| rng.gen_range(-2.0..2.0)));
        let out = enc.attend(&motion).unwrap();
        let mask = build_mask(&p, self_only);
        let s = mask.size;
        for w in &out.weights {
            let w = w.value();
            for t in 0..3 {
                for a in 0..s {
                    let mut sum = 0.0;
                    for b in 0..s {
                        let v = w.at(&[0, t, a, b]);
                        if !mask.is_open(a, b) {
                            prop_assert_eq!(v, 0.0);
                        }
                        sum += v;
                    }
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
