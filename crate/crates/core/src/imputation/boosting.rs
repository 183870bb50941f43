use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, GrowParams, RegressionTree};
use super::{Family, FittedModel, ImputationModel, ImputerFamily, TrainingSet, TreeParams};
use crate::error::Result;
use crate::rng;

/// Gradient-boosted regression trees under squared loss:
/// `F(x) = base + η Σ_t f_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedModel {
    pub fn fit(rows: &TrainingSet, params: &TreeParams, seed: u64) -> Result<Self> {
        rows.require(2)?;
        let n = rows.len();
        let p = rows.p();
        let base = rows.y().iter().sum::<f64>() / n as f64;
        let grow = GrowParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: params.max_features.unwrap_or(p).clamp(1, p),
        };
        let mut fitted = vec![base; n];
        let mut residuals = vec![0.0; n];
        let mut trees = Vec::new();
        if params.learning_rate != 0.0 {
            let take = ((params.subsample.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n);
            for round in 0..params.n_trees {
                let mut r = rng::stream(seed, &[round as u64]);
                for i in 0..n {
                    residuals[i] = rows.y()[i] - fitted[i];
                }
                let slots: Vec<u32> = if take == n {
                    (0..n as u32).collect()
                } else {
                    let mut s: Vec<u32> = sample(&mut r, n, take)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect();
                    s.sort_unstable();
                    s
                };
                let tree = grow_tree(rows.x(), p, &residuals, &slots, grow, &mut r);
                for (i, f) in fitted.iter_mut().enumerate() {
                    *f += params.learning_rate * tree.predict(rows.row(i));
                }
                trees.push(tree);
            }
        }
        Ok(Self {
            base,
            learning_rate: params.learning_rate,
            trees,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl ImputationModel for BoostedModel {
    fn predict(&self, x: &[f64]) -> f64 {
        BoostedModel::predict(self, x)
    }

    fn family(&self) -> Family {
        Family::BoostedTrees
    }
}

pub struct BoostedFamily;

impl ImputerFamily for BoostedFamily {
    fn name(&self) -> &'static str {
        "boosted_trees"
    }

    fn family(&self) -> Family {
        Family::BoostedTrees
    }

    fn train(&self, rows: &TrainingSet, params: &TreeParams, seed: u64) -> Result<FittedModel> {
        Ok(FittedModel::BoostedTrees(BoostedModel::fit(
            rows, params, seed,
        )?))
    }
}
