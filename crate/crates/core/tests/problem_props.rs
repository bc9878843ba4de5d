use conef::linalg::{dist_sq, norm, norm_sq};
use conef::numerics::RngStream;
use conef::problems::{finite_diff_check, LeastSquares, LogReg, Mlp, Problem, ShardedDataset};
use proptest::prelude::*;

fn point(rng: &mut RngStream, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.next_gaussian()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let problems: Vec<Box<dyn Problem>> = vec![
            Box::new(LeastSquares::make(20, 30, seed, 1.0).unwrap()),
            Box::new(LogReg::make(40, 15, seed).unwrap()),
            Box::new(Mlp::make(&[4, 6, 5, 3], 30, seed).unwrap()),
        ];
        for p in &problems {
            let x = point(&mut rng, p.dim(), 0.5);
            let coords: Vec<usize> = (0..p.dim()).step_by(3).collect();
            let err = finite_diff_check(p.as_ref(), &x, &coords, 1e-5);
            prop_assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn full_batch_gradient_is_the_gradient(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 1);
        let problems: Vec<Box<dyn Problem>> = vec![
            Box::new(LeastSquares::make(12, 20, seed, 1.0).unwrap()),
            Box::new(LogReg::make(25, 9, seed).unwrap()),
            Box::new(Mlp::make(&[3, 4, 4, 2], 10, seed).unwrap()),
        ];
        for p in &problems {
            let x = point(&mut rng, p.dim(), 0.3);
            let all: Vec<usize> = (0..p.samples()).collect();
            let g = p.gradient(&x);
            prop_assert!(dist_sq(&p.batch_gradient(&x, &all), &g) <= 1e-20 + 1e-20 * norm_sq(&g));
        }
    }

    #[test]
    fn min_norm_solution_interpolates_inside_the_row_space(seed in any::<u64>(), n in 2usize..20, extra in 1usize..30) {
        let p = LeastSquares::make(n, n + extra, seed, 1.0).unwrap();
        let x = p.min_norm_solution().unwrap();
        prop_assert!(p.loss(&x) < 1e-18);
        prop_assert!(p.rowspace_residual(&x) < 1e-9);
        let planted = p.planted().unwrap();
        prop_assert!(dist_sq(&x, planted) < 1e-16);
        prop_assert!((norm(planted) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_splits_the_space(seed in any::<u64>()) {
        let p = LeastSquares::make(8, 24, seed, 1.0).unwrap();
        let v = point(&mut RngStream::new(seed, 2), 24, 1.0);
        let pv = p.project_rowspace(&v);
        prop_assert!(dist_sq(&p.project_rowspace(&pv), &pv) < 1e-20);
        let orth = norm_sq(&v) - norm_sq(&pv);
        prop_assert!((p.rowspace_residual(&v).powi(2) - orth).abs() < 1e-9);
    }

    #[test]
    fn shards_partition_the_data(samples in 1usize..200, workers in 1usize..9, seed in any::<u64>()) {
        prop_assume!(workers <= samples);
        let data = ShardedDataset::new(samples, workers, 4).unwrap();
        let mut seen = vec![0u32; samples];
        for w in 0..workers {
            data.shard(w).iter().for_each(|&i| seen[i] += 1);
            let batch = data.draw(w, &mut RngStream::new(seed, w as u64));
            prop_assert_eq!(batch.indices.len(), 4);
            prop_assert!(batch.indices.iter().all(|i| data.shard(w).contains(i)));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

#[test]
fn zero_weights_cost_log_two() {
    let p = LogReg::make(100, 10, 3).unwrap();
    assert!((p.loss(&vec![0.0; 10]) - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn shapes_are_validated() {
    assert!(LeastSquares::make(0, 3, 1, 1.0).is_err());
    assert!(LogReg::make(10, 0, 1).is_err());
    assert!(Mlp::make(&[3], 10, 1).is_err());
    assert!(ShardedDataset::new(3, 4, 1).is_err());
}
