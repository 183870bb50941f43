use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, GrowParams, RegressionTree};
use super::{Family, FittedModel, ImputationModel, ImputerFamily, TrainingSet, TreeParams};
use crate::error::{Error, Result};
use crate::rng;

/// Bagged regression trees; the prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
}

impl ForestModel {
    pub fn fit(rows: &TrainingSet, params: &TreeParams, seed: u64) -> Result<Self> {
        rows.require(2)?;
        if params.n_trees == 0 {
            return Err(Error::Config(
                "random_forest needs at least one tree".into(),
            ));
        }
        let n = rows.len();
        let p = rows.p();
        let grow = GrowParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: params.max_features.unwrap_or(p).clamp(1, p),
        };
        // Each tree owns a stream derived from (seed, tree index).
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(seed, &[t as u64]);
                let slots: Vec<u32> = if params.bootstrap {
                    (0..n).map(|_| r.random_range(0..n as u32)).collect()
                } else {
                    (0..n as u32).collect()
                };
                grow_tree(rows.x(), p, rows.y(), &slots, grow, &mut r)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

impl ImputationModel for ForestModel {
    fn predict(&self, x: &[f64]) -> f64 {
        ForestModel::predict(self, x)
    }

    fn family(&self) -> Family {
        Family::RandomForest
    }
}

pub struct ForestFamily;

impl ImputerFamily for ForestFamily {
    fn name(&self) -> &'static str {
        "random_forest"
    }

    fn family(&self) -> Family {
        Family::RandomForest
    }

    fn train(&self, rows: &TrainingSet, params: &TreeParams, seed: u64) -> Result<FittedModel> {
        Ok(FittedModel::RandomForest(ForestModel::fit(
            rows, params, seed,
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_without_bootstrap_is_training_mean() {
        let rows = super::super::tests::noisy_rows(3, 50, 2);
        let params = TreeParams {
            max_depth: 0,
            bootstrap: false,
            n_trees: 7,
            ..TreeParams::defaults_for(Family::RandomForest)
        };
        let m = ForestModel::fit(&rows, &params, 1).unwrap();
        let mean = rows.y().iter().sum::<f64>() / rows.len() as f64;
        for x in [[0.0, 0.0], [5.0, -5.0]] {
            assert!((m.predict(&x) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_beats_constant_on_nonlinear_signal() {
        let rows = super::super::tests::noisy_rows(8, 400, 2);
        let params = TreeParams {
            n_trees: 30,
            ..TreeParams::defaults_for(Family::RandomForest)
        };
        let m = ForestModel::fit(&rows, &params, 3).unwrap();
        let mean = rows.y().iter().sum::<f64>() / rows.len() as f64;
        let mut sse_model = 0.0;
        let mut sse_const = 0.0;
        for i in 0..rows.len() {
            sse_model += (rows.y()[i] - m.predict(rows.row(i))).powi(2);
            sse_const += (rows.y()[i] - mean).powi(2);
        }
        assert!(sse_model < 0.1 * sse_const, "{sse_model} vs {sse_const}");
    }
}
