use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Family, FittedModel, ImputationModel, ImputerFamily, TrainingSet, TreeParams};
use crate::error::Result;

/// Least squares with intercept. Rank-deficient designs get the
/// minimum-norm solution and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub rank_deficient: bool,
}

impl OlsModel {
    pub fn fit(rows: &TrainingSet) -> Result<Self> {
        rows.require(2)?;
        let n = rows.len();
        let p = rows.p();
        let y_mean = rows.y().iter().sum::<f64>() / n as f64;
        let x_mean: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| rows.row(i)[j]).sum::<f64>() / n as f64)
            .collect();
        if p == 0 {
            return Ok(Self {
                intercept: y_mean,
                coefficients: Vec::new(),
                rank_deficient: false,
            });
        }
        // Centering absorbs the intercept exactly, so residuals sum to zero
        // up to rounding in the means regardless of solver accuracy.
        let design = DMatrix::from_fn(n, p, |i, j| rows.row(i)[j] - x_mean[j]);
        let target = DVector::from_iterator(n, rows.y().iter().map(|y| y - y_mean));
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.max();
        let eps = max_sv * f64::EPSILON * (n.max(p) as f64);
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        let solution = svd
            .solve(&target, eps)
            .expect("both singular vector sets were computed");
        let coefficients: Vec<f64> = solution.iter().copied().collect();
        let intercept = y_mean
            - x_mean
                .iter()
                .zip(&coefficients)
                .map(|(m, b)| m * b)
                .sum::<f64>();
        Ok(Self {
            intercept,
            coefficients,
            rank_deficient: rank < p,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl ImputationModel for OlsModel {
    fn predict(&self, x: &[f64]) -> f64 {
        OlsModel::predict(self, x)
    }

    fn family(&self) -> Family {
        Family::Ols
    }
}

pub struct OlsFamily;

impl ImputerFamily for OlsFamily {
    fn name(&self) -> &'static str {
        "ols"
    }

    fn family(&self) -> Family {
        Family::Ols
    }

    fn train(&self, rows: &TrainingSet, _params: &TreeParams, _seed: u64) -> Result<FittedModel> {
        Ok(FittedModel::Ols(OlsModel::fit(rows)?))
    }
}
