//! Optional pre-centering for data whose covariates and outcome are not
//! mean zero. The objectives have no intercept, so an uncentered outcome
//! level is otherwise absorbed by whichever covariates have nonzero means.

use serde::{Deserialize, Serialize};

use crate::data::{EnvironmentData, Imputations, MultiEnvDataset};
use crate::error::Result;

/// Pooled means removed by [`center`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    /// Covariate means over all rows.
    pub x_mean: Vec<f64>,
    /// Outcome mean over labeled rows.
    pub y_mean: f64,
}

impl Centering {
    /// `ȳ + βᵀ(x − x̄)`.
    pub fn predict(&self, beta: &[f64], x: &[f64]) -> f64 {
        self.y_mean
            + x.iter()
                .zip(&self.x_mean)
                .zip(beta)
                .map(|((a, m), b)| (a - m) * b)
                .sum::<f64>()
    }
}

/// Subtracts pooled means from covariates, outcomes and predictions.
pub fn center(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
) -> Result<(MultiEnvDataset, Option<Imputations>, Centering)> {
    let p = data.p();
    let mut x_sum = vec![0.0; p];
    let mut rows = 0usize;
    let mut y_sum = 0.0;
    let mut labeled = 0usize;
    for env in data.environments() {
        for x in env.rows() {
            for (s, v) in x_sum.iter_mut().zip(x) {
                *s += v;
            }
            rows += 1;
        }
        for (_, _, y) in env.labeled() {
            y_sum += y;
            labeled += 1;
        }
    }
    let x_mean: Vec<f64> = x_sum.iter().map(|s| s / rows as f64).collect();
    let y_mean = y_sum / labeled as f64;
    let envs = data
        .environments()
        .iter()
        .map(|env| {
            let cov = env
                .covariates_flat()
                .chunks(p)
                .flat_map(|x| x.iter().zip(&x_mean).map(|(a, m)| a - m))
                .collect();
            let out = env
                .outcomes()
                .iter()
                .map(|y| y.map(|v| v - y_mean))
                .collect();
            let c = EnvironmentData::from_flat(env.env_id(), p, cov, out)?;
            Ok(match env.raw_weight() {
                Some(w) => c.with_weight(w),
                None => c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let imps = imputations.map(|imp| {
        Imputations::new(
            imp.per_env()
                .iter()
                .map(|h| h.iter().map(|v| v - y_mean).collect())
                .collect(),
        )
    });
    Ok((
        MultiEnvDataset::new(envs)?,
        imps,
        Centering { x_mean, y_mean },
    ))
}
