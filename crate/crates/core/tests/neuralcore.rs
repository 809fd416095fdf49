use absa_core::neuralcore::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sequence(t_len: usize, d: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(&[t_len, d], 1.0, &mut rng)
}

fn reversed(x: &Tensor<f64>) -> Tensor<f64> {
    let t_len = x.rows();
    let mut out = Tensor::zeros(x.shape());
    for t in 0..t_len {
        out.row_mut(t).copy_from_slice(x.row(t_len - 1 - t));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_heads_are_normalized(z in prop::collection::vec(-30.0f32..30.0, 2..8)) {
        let y = softmax(&z);
        let sum: f32 = y.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "sum {}", sum);
        prop_assert!(y.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn bilstm_time_reversal_symmetry(t_len in 1usize..=6, d_in in 1usize..=5, d_h in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = LstmCellParams::<f64>::init(d_in, d_h, &mut rng);
        let bwd = LstmCellParams::<f64>::init(d_in, d_h, &mut rng);
        let x = sequence(t_len, d_in, seed ^ 1);
        let (y, _) = bilstm_forward(&x, &fwd, &bwd).unwrap();
        let (yr, _) = bilstm_forward(&reversed(&x), &bwd, &fwd).unwrap();
        for t in 0..t_len {
            let (a, b) = (y.row(t), yr.row(t_len - 1 - t));
            for k in 0..d_h {
                prop_assert!((a[k] - b[d_h + k]).abs() < 1e-12);
                prop_assert!((a[d_h + k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_ops_are_pure(t_len in 1usize..=6, d in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = LstmCellParams::<f64>::init(d, d, &mut rng);
        let x = sequence(t_len, d, seed);
        let (a, _) = bilstm_forward(&x, &p, &p).unwrap();
        let (b, _) = bilstm_forward(&x, &p, &p).unwrap();
        prop_assert_eq!(a.data(), b.data());
        let (pa, _) = global_pool_concat(&x, None).unwrap();
        let (pb, _) = global_pool_concat(&x, None).unwrap();
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn fully_masked_pooling_is_rejected(t_len in 1usize..=6, d in 1usize..=5) {
        let x = sequence(t_len, d, 3);
        let mask = vec![false; t_len];
        prop_assert!(global_pool_concat(&x, Some(&mask)).is_err());
    }

    #[test]
    fn random_shapes_pass_the_gradient_check(op in 0usize..OpKind::ALL.len(), seed in any::<u64>()) {
        let c = check_op(OpKind::ALL[op], seed, 1e-5).unwrap();
        prop_assert!(c.report.max_rel_error <= 1e-6, "{} {}: {:.3e}", c.op, c.shape, c.report.max_rel_error);
    }
}
