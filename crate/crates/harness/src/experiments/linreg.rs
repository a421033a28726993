use fishnets_core::fishnets::FishnetsModel;
use fishnets_core::genmodels::{linreg_mle, linreg_score_fisher_dense, LinRegPrior, SetDataset};
use fishnets_core::linalg::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One datum with the network's per-datum score and the exact one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSlice {
    pub input: Vec<f64>,
    pub nn_score: Vec<f64>,
    pub analytic_score: Vec<f64>,
}

/// Residuals over test sets, one row per set, plus score slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRecords {
    /// `theta_hat_NN - theta_true`.
    pub vs_truth: Vec<Vec<f64>>,
    /// `theta_hat_NN - theta_hat_MLE`.
    pub vs_mle: Vec<Vec<f64>>,
    pub slices: Vec<ScoreSlice>,
}

impl SaturationRecords {
    /// Root mean square of `vs_mle` per parameter.
    pub fn rmse_vs_mle(&self) -> Vec<f64> {
        column_stat(&self.vs_mle, |c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
    }

    /// Mean of `vs_mle` per parameter.
    pub fn bias_vs_mle(&self) -> Vec<f64> {
        column_stat(&self.vs_mle, |c| c.iter().sum::<f64>() / c.len() as f64)
    }
}

fn column_stat(rows: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let n_p = rows.first().map_or(0, Vec::len);
    (0..n_p)
        .map(|k| f(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect()
}

/// Residuals of `estimator` against truth and the exact MLE on every test
/// set, plus `n_slices` per-datum score slices taken from the first set.
pub fn linreg_saturation<E>(
    estimator: E,
    model_for_slices: Option<&FishnetsModel>,
    prior: &LinRegPrior,
    test: &[SetDataset],
    n_slices: usize,
) -> Result<SaturationRecords>
where
    E: Fn(&SetDataset) -> Result<Vec<f64>> + Sync,
{
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = test
        .par_iter()
        .map(|set| {
            let nn = estimator(set)?;
            let mle = linreg_mle(set, prior)?;
            let vs_truth = nn.iter().zip(&set.theta).map(|(a, b)| a - b).collect();
            let vs_mle = nn.iter().zip(&mle).map(|(a, b)| a - b).collect();
            Ok((vs_truth, vs_mle))
        })
        .collect::<Result<_>>()?;
    let (vs_truth, vs_mle) = pairs.into_iter().unzip();

    let mut slices = Vec::new();
    if let (Some(model), Some(first)) = (model_for_slices, test.first()) {
        // per-datum score: the data term alone, no prior
        let no_prior = LinRegPrior {
            prior_precision: Matrix::zeros(2, 2),
            ..prior.clone()
        };
        for row in first.rows().take(n_slices) {
            let (nn_score, _) = model.embed_datum(row)?;
            let one = Matrix::from_vec(1, row.len(), row.to_vec())?;
            let (analytic, _) = linreg_score_fisher_dense(&one, &no_prior)?;
            slices.push(ScoreSlice {
                input: row.to_vec(),
                nn_score: nn_score.0,
                analytic_score: analytic,
            });
        }
    }
    Ok(SaturationRecords {
        vs_truth,
        vs_mle,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fishnets_core::genmodels::simulate_linreg;

    #[test]
    fn exact_mle_against_itself_has_zero_residuals() {
        let prior = LinRegPrior::default();
        let sets: Vec<_> = (0..5).map(|s| simulate_linreg(&prior, 40, s).unwrap()).collect();
        let rec = linreg_saturation(|s| Ok(linreg_mle(s, &prior)?), None, &prior, &sets, 0).unwrap();
        assert_eq!(rec.vs_mle.len(), sets.len());
        assert!(rec.vs_mle.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(rec.rmse_vs_mle(), vec![0.0, 0.0]);
    }
}
