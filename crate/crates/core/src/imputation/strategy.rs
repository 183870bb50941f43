//! Precise, bias and hbias imputation strategies.
//!
//! * `precise` trains one model per environment on that environment's rows.
//! * `bias` trains one pooled model and evaluates it at `x + δ`.
//! * `hbias` evaluates the pooled model at `x + δ_h + ε`, with Gaussian
//!   covariate noise `ε` drawn from a stream keyed by `(seed, env, row)`.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{train, Family, FittedModel, ImputationModel, TrainingSet, TreeParams};
use crate::data::{Imputations, MultiEnvDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Precise,
    Bias,
    Hbias,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Precise => "precise",
            Strategy::Bias => "bias",
            Strategy::Hbias => "hbias",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "precise" => Ok(Self::Precise),
            "bias" => Ok(Self::Bias),
            "hbias" => Ok(Self::Hbias),
            _ => Err(Error::UnknownName {
                kind: "imputation strategy",
                name: name.to_owned(),
            }),
        }
    }

    pub fn default_shift(self) -> f64 {
        match self {
            Strategy::Precise => 0.0,
            Strategy::Bias => 0.5,
            Strategy::Hbias => 1.0,
        }
    }

    pub fn default_noise_sd(self) -> f64 {
        match self {
            Strategy::Precise | Strategy::Bias => 0.0,
            Strategy::Hbias => 0.5,
        }
    }
}

/// Covariate shift: the same value for every coordinate, or one per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftDelta {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ShiftDelta {
    pub fn resolve(&self, p: usize) -> Result<Vec<f64>> {
        match self {
            ShiftDelta::Scalar(v) => Ok(vec![*v; p]),
            ShiftDelta::Vector(v) if v.len() == p => Ok(v.clone()),
            ShiftDelta::Vector(v) => Err(Error::DimensionMismatch(format!(
                "shift_delta has {} entries, expected {p}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerSpec {
    pub family: Family,
    pub strategy: Strategy,
    pub trees: TreeParams,
    pub seed: u64,
    /// Ignored by `precise`.
    pub shift_delta: ShiftDelta,
    /// Ignored unless `hbias`.
    pub noise_sd: f64,
}

impl ImputerSpec {
    /// Spec with the family's tree defaults and the strategy's default shift
    /// and noise.
    pub fn new(family: Family, strategy: Strategy, seed: u64) -> Self {
        Self {
            family,
            strategy,
            trees: TreeParams::defaults_for(family),
            seed,
            shift_delta: ShiftDelta::Scalar(strategy.default_shift()),
            noise_sd: strategy.default_noise_sd(),
        }
    }
}

/// The per-environment predictor produced by a strategy.
#[derive(Debug, Clone)]
pub struct EnvImputer {
    model: Arc<FittedModel>,
    shift: Vec<f64>,
    noise_sd: f64,
    noise_seed: u64,
}

impl EnvImputer {
    pub fn plain(model: Arc<FittedModel>) -> Self {
        Self {
            model,
            shift: Vec::new(),
            noise_sd: 0.0,
            noise_seed: 0,
        }
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    /// Prediction for row `row` with covariates `x`.
    pub fn predict_row(&self, x: &[f64], row: usize) -> f64 {
        if self.shift.is_empty() && self.noise_sd == 0.0 {
            return self.model.predict(x);
        }
        let mut moved: Vec<f64> = if self.shift.is_empty() {
            x.to_vec()
        } else {
            x.iter().zip(&self.shift).map(|(a, d)| a + d).collect()
        };
        if self.noise_sd > 0.0 {
            let mut r = rng::stream(self.noise_seed, &[row as u64]);
            for v in &mut moved {
                let z: f64 = StandardNormal.sample(&mut r);
                *v += self.noise_sd * z;
            }
        }
        self.model.predict(&moved)
    }
}

/// Builds one predictor per environment from per-environment training rows.
pub fn build_strategy(spec: &ImputerSpec, sources: &[TrainingSet]) -> Result<Vec<EnvImputer>> {
    if spec.noise_sd.is_nan() || spec.noise_sd < 0.0 {
        return Err(Error::Config(format!(
            "noise_sd must be nonnegative, got {}",
            spec.noise_sd
        )));
    }
    match spec.strategy {
        Strategy::Precise => sources
            .iter()
            .enumerate()
            .map(|(e, rows)| {
                let seed = rng::derive_seed(spec.seed, &[e as u64]);
                let model = train(spec.family, rows, &spec.trees, seed)?;
                Ok(EnvImputer::plain(Arc::new(model)))
            })
            .collect(),
        Strategy::Bias | Strategy::Hbias => {
            let pooled = TrainingSet::pooled(sources)?;
            let model = Arc::new(train(
                spec.family,
                &pooled,
                &spec.trees,
                pooled_seed(spec.seed),
            )?);
            let shift = spec.shift_delta.resolve(pooled.p())?;
            let noise_sd = if spec.strategy == Strategy::Hbias {
                spec.noise_sd
            } else {
                0.0
            };
            Ok((0..sources.len())
                .map(|e| EnvImputer {
                    model: Arc::clone(&model),
                    shift: shift.clone(),
                    noise_sd,
                    noise_seed: rng::derive_seed(spec.seed, &[rng::tag("hbias-noise"), e as u64]),
                })
                .collect())
        }
    }
}

/// Seed used for the single pooled model of the `bias`/`hbias` strategies.
pub fn pooled_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, &[rng::tag("pooled")])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDiagnostics {
    /// Mean imputation error `ĥ(x) − y` over labeled rows.
    pub eta_hat: f64,
    /// `ĥ(x_i) − y_i` for labeled rows in storage order.
    pub residuals: Vec<f64>,
    pub residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationDiagnostics {
    pub per_env: Vec<EnvDiagnostics>,
}

/// Predicts every row of every environment; diagnostics use labeled rows only.
pub fn impute_dataset(
    models: &[EnvImputer],
    data: &MultiEnvDataset,
) -> Result<(Imputations, ImputationDiagnostics)> {
    let mut preds = Vec::with_capacity(data.n_environments());
    let mut per_env = Vec::with_capacity(data.n_environments());
    for (e, env) in data.environments().iter().enumerate() {
        let model = models.get(e).ok_or(Error::MissingModel(e))?;
        let h: Vec<f64> = env
            .rows()
            .enumerate()
            .map(|(i, x)| model.predict_row(x, i))
            .collect();
        let residuals: Vec<f64> = env.labeled().map(|(i, _, y)| h[i] - y).collect();
        let count = residuals.len() as f64;
        let eta_hat = residuals.iter().sum::<f64>() / count;
        let residual_sd = if residuals.len() > 1 {
            (residuals.iter().map(|z| (z - eta_hat).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
        } else {
            0.0
        };
        per_env.push(EnvDiagnostics {
            eta_hat,
            residuals,
            residual_sd,
        });
        preds.push(h);
    }
    Ok((Imputations::new(preds), ImputationDiagnostics { per_env }))
}
