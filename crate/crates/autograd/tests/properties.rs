use partret_autograd::gradcheck::check_gradients;
use partret_autograd::{Tensor, Var};
use proptest::prelude::*;

fn tensor(shape: &[usize], values: &[f64]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |i| values[i % values.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_matches_naive_product(m in 1usize..5, k in 1usize..5, n in 1usize..5, vals in prop::collection::vec(-2.0f64..2.0, 7..31)) {
        let a = tensor(&[m, k], &vals);
        let b = tensor(&[k, n], &vals[3..]);
        let c = Var::constant(a.clone()).matmul(&Var::constant(b.clone()));
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|r| a.at(&[i, r]) * b.at(&[r, j])).sum();
                prop_assert!((c.value().at(&[i, j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_gradients_match_differences(m in 1usize..4, k in 1usize..4, n in 1usize..4, vals in prop::collection::vec(-2.0f64..2.0, 5..17)) {
        let inputs = [tensor(&[m, k], &vals), tensor(&[k, n], &vals[2..])];
        for r in check_gradients(&inputs, |v| v[0].matmul(&v[1]).sqr().sum_all(), 1e-6, 1e-6) {
            prop_assert!(r.max_rel_error < 1e-6);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 1usize..7, vals in prop::collection::vec(-30.0f64..30.0, 1..35)) {
        let s = Var::constant(tensor(&[rows, cols], &vals)).softmax_last();
        for r in 0..rows {
            let sum: f64 = (0..cols).map(|c| s.value().at(&[r, c])).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permute_then_inverse_is_identity(vals in prop::collection::vec(-1.0f64..1.0, 24)) {
        let t = Tensor::new([2, 3, 4], vals);
        prop_assert_eq!(t.permute(&[2, 0, 1]).permute(&[1, 2, 0]), t);
    }
}
