//! Implementation paths checked against independent reference computations.

use approx::assert_relative_eq;
use fishnets_core::baselines::softmax_aggregate;
use fishnets_core::fishnets::{cholesky_from_raw, mle_estimate, ScoreVector};
use fishnets_core::genmodels::{
    linreg_mle, linreg_score_fisher_dense, simulate_linreg, truncated_exp_mean, LinRegPrior,
    RobustnessShift,
};
use fishnets_core::linalg::packed_len;
use fishnets_core::nn::{Activation, DenseNet};
use fishnets_core::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

/// Gaussian elimination with partial pivoting on a copy of `a`.
fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| row.iter().copied().chain([bi]).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

#[test]
fn estimator_matches_gaussian_elimination() {
    let mut rng = rng_from_seed(42);
    for trial in 0..200 {
        let n_p = 1 + trial % 5;
        let raw: Vec<f64> = (0..packed_len(n_p))
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let f = cholesky_from_raw(&raw, n_p).unwrap();
        let t: Vec<f64> = (0..n_p).map(|_| rng.random_range(-10.0..10.0)).collect();
        let c: Vec<f64> = (0..n_p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = f.to_dense();
        let rows: Vec<Vec<f64>> = (0..n_p).map(|i| dense.row(i).to_vec()).collect();
        let expected: Vec<f64> = gauss_solve(&rows, &t)
            .iter()
            .zip(&c)
            .map(|(x, c)| x + c)
            .collect();
        let got = mle_estimate(&ScoreVector(t), &f, &c).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_relative_eq!(g, e, epsilon = 1e-9, max_relative = 1e-9);
        }
    }
}

fn reference_activation(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Elu => {
            if z > 0.0 {
                z
            } else {
                z.exp() - 1.0
            }
        }
        Activation::Swish => z / (1.0 + (-z).exp()),
        Activation::Identity => z,
    }
}

#[test]
fn forward_matches_explicit_loops() {
    let mut rng = rng_from_seed(7);
    let sizes = [5, 9, 7, 3];
    let acts = [Activation::Swish, Activation::Elu];
    let net = DenseNet::new_with_rng(&sizes, &acts, &mut rng).unwrap();
    for _ in 0..50 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut h = x.clone();
        for layer in 0..3 {
            let w = net.weight(layer);
            let b = net.bias(layer);
            let mut next = vec![0.0; sizes[layer + 1]];
            for o in 0..sizes[layer + 1] {
                let mut z = b[o];
                for i in 0..sizes[layer] {
                    z += w[(o, i)] * h[i];
                }
                next[o] = if layer < 2 {
                    reference_activation(acts[layer], z)
                } else {
                    z
                };
            }
            h = next;
        }
        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&h) {
            assert_relative_eq!(g, e, epsilon = 1e-13, max_relative = 1e-12);
        }
    }
}

#[test]
fn softmax_matches_unshifted_formula() {
    let mut rng = rng_from_seed(3);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let beta = rng.random_range(-3.0..3.0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let got = softmax_aggregate(&rows, beta).unwrap();
        for k in 0..3 {
            let z: f64 = rows.iter().map(|r| (beta * r[k]).exp()).sum();
            let e: f64 = rows.iter().map(|r| (beta * r[k]).exp() * r[k]).sum::<f64>() / z;
            assert_relative_eq!(got[k], e, epsilon = 1e-12, max_relative = 1e-11);
        }
    }
}

#[test]
fn linreg_mle_matches_weighted_least_squares_with_prior() {
    let prior = LinRegPrior::default();
    for seed in 0..20 {
        let set = simulate_linreg(&prior, 200, seed).unwrap();
        // normal equations of the penalized weighted least-squares problem
        let mut a = DMatrix::<f64>::zeros(2, 2);
        let mut b = DVector::<f64>::zeros(2);
        for row in set.rows() {
            let (y, x, var) = (row[0], row[1], row[2]);
            let phi = DVector::from_vec(vec![x, 1.0]);
            a += &phi * phi.transpose() / var;
            b += &phi * (y / var);
        }
        let p = DMatrix::from_row_slice(2, 2, prior.prior_precision.as_slice());
        a += &p;
        b += &p * DVector::from_vec(prior.mu_p.clone());
        let expected = a.clone().lu().solve(&b).unwrap();
        let got = linreg_mle(&set, &prior).unwrap();
        assert_relative_eq!(got[0], expected[0], epsilon = 1e-9, max_relative = 1e-9);
        assert_relative_eq!(got[1], expected[1], epsilon = 1e-9, max_relative = 1e-9);

        let (_, fisher) = linreg_score_fisher_dense(&set.data, &prior).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(fisher[(i, j)], a[(i, j)], max_relative = 1e-12);
            }
        }
    }
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

#[test]
fn shifted_noise_mean_matches_numeric_integration() {
    let shift = RobustnessShift::default();
    let width = shift.sigma_max - shift.sigma_loc;
    let mass = simpson(0.0, width, 20_000, |s| (-s).exp());
    let first = simpson(0.0, width, 20_000, |s| s * (-s).exp());
    let integrated = shift.sigma_loc + first / mass;
    assert_relative_eq!(shift.sigma_loc + truncated_exp_mean(1.0, width), integrated, epsilon = 1e-10);
    assert_relative_eq!(integrated, 4.4902, epsilon = 5e-5);

    let mut rng = rng_from_seed(8);
    let n = 200_000;
    let draws: Vec<f64> = (0..n).map(|_| shift.sample_sigma(&mut rng)).collect();
    assert!(draws.iter().all(|s| (shift.sigma_loc..=shift.sigma_max).contains(s)));
    let mean = draws.iter().sum::<f64>() / n as f64;
    assert!((mean - integrated).abs() < 0.01, "sample mean {mean}");
}
