use fishnets_core::baselines::{mean_aggregate, softmax_aggregate};
use fishnets_core::fishnets::{
    aggregate, cholesky_from_raw, mle_estimate, FishnetsArch, FishnetsModel, ScoreVector,
};
use fishnets_core::graph::{fishnets_neighborhood_agg, mean_neighborhood_agg};
use fishnets_core::linalg::{packed_index, packed_len, Matrix};
use fishnets_core::nn::Activation;
use fishnets_core::rng::rng_from_seed;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `softplus^-1(1)`: raw diagonal that yields a unit Cholesky diagonal.
const UNIT_RAW: f64 = 0.541_324_854_612_918_1;

fn raw_entries(n_p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, packed_len(n_p))
}

fn embedding(n_p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-50.0..50.0f64, n_p), raw_entries(n_p))
}

fn min_eigenvalue(f: &Matrix) -> f64 {
    let n = f.rows();
    let m = DMatrix::from_row_slice(n, n, f.as_slice());
    m.symmetric_eigen().eigenvalues.min()
}

fn embeddings_of(
    items: &[(Vec<f64>, Vec<f64>)],
    n_p: usize,
) -> Vec<(ScoreVector, fishnets_core::fishnets::FisherMatrix)> {
    items
        .iter()
        .map(|(t, raw)| (ScoreVector(t.clone()), cholesky_from_raw(raw, n_p).unwrap()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregation_ignores_order_bitwise(
        items in prop::collection::vec(embedding(3), 1..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = items.clone();
        let mut rng = rng_from_seed(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let (t1, f1) = aggregate(&embeddings_of(&items, 3)).unwrap();
        let (t2, f2) = aggregate(&embeddings_of(&shuffled, 3)).unwrap();
        prop_assert_eq!(t1, t2);
        prop_assert_eq!(f1.to_dense(), f2.to_dense());
    }

    #[test]
    fn raw_factors_give_positive_definite_fishers(n_p in 1usize..5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let raw: Vec<f64> = (0..packed_len(n_p))
            .map(|_| rand::Rng::random_range(&mut rng, -6.0..6.0))
            .collect();
        let fisher = cholesky_from_raw(&raw, n_p).unwrap();
        for i in 0..n_p {
            prop_assert!(fisher.chol().get(i, i) > 0.0);
        }
        // eigen-solver rounding is of order eps * |F|
        let f = fisher.to_dense();
        let scale = f.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(min_eigenvalue(&f) > -16.0 * f64::EPSILON * scale);
        for i in 0..n_p {
            for j in 0..n_p {
                prop_assert_eq!(f[(i, j)], f[(j, i)]);
            }
        }
    }

    #[test]
    fn softmax_at_zero_temperature_is_the_mean(
        rows in prop::collection::vec(prop::collection::vec(-20.0..20.0f64, 4), 1..30),
    ) {
        let s = softmax_aggregate(&rows, 0.0).unwrap();
        let m = mean_aggregate(&rows).unwrap();
        for (a, b) in s.iter().zip(&m) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn shared_fisher_reduces_to_mean_of_scores(
        scores in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 2), 1..25),
    ) {
        let n_p = 2;
        let mut raw = vec![0.0; packed_len(n_p)];
        for i in 0..n_p {
            raw[packed_index(i, i)] = UNIT_RAW;
        }
        let messages: Vec<Vec<f64>> = scores
            .iter()
            .map(|t| t.iter().chain(&raw).copied().collect())
            .collect();
        let refs: Vec<&[f64]> = messages.iter().map(Vec::as_slice).collect();
        let out = fishnets_neighborhood_agg(&refs, n_p).unwrap();
        let score_refs: Vec<&[f64]> = scores.iter().map(Vec::as_slice).collect();
        let mean = mean_neighborhood_agg(&score_refs, n_p).unwrap();
        for (a, b) in out.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn duplicated_neighborhood_gives_same_estimate(
        items in prop::collection::vec(embedding(2), 1..12),
        copies in 2usize..6,
    ) {
        let messages: Vec<Vec<f64>> = items
            .iter()
            .map(|(t, raw)| t.iter().chain(raw).copied().collect())
            .collect();
        let once: Vec<&[f64]> = messages.iter().map(Vec::as_slice).collect();
        let many: Vec<&[f64]> = (0..copies).flat_map(|_| once.iter().copied()).collect();
        let a = fishnets_neighborhood_agg(&once, 2).unwrap();
        let b = fishnets_neighborhood_agg(&many, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn identity_fisher_estimate_is_score_plus_offset(
        t in prop::collection::vec(-100.0..100.0f64, 3),
        c in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let f = fishnets_core::fishnets::FisherMatrix::from_dense(&Matrix::identity(3)).unwrap();
        let est = mle_estimate(&ScoreVector(t.clone()), &f, &c).unwrap();
        for i in 0..3 {
            prop_assert_eq!(est[i], t[i] + c[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn model_estimate_ignores_row_order(seed in any::<u64>(), n in 1usize..300) {
        let mut rng = rng_from_seed(seed);
        let arch = FishnetsArch { hidden: vec![8, 8], activation: Activation::Swish };
        let model = FishnetsModel::init(3, 2, &arch, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect())
            .collect();
        let mut shuffled = rows.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = model.estimate(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let b = model.estimate(&Matrix::from_rows(&shuffled).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
