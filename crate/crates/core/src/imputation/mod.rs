//! Imputation models and the strategies that route them to environments.
//!
//! Model families are registered by name behind [`ImputerFamily`]; a family
//! trains a [`FittedModel`] from labeled rows. Strategies in [`strategy`]
//! decide which rows a model is trained on and how its inputs are perturbed.

mod boosting;
mod forest;
mod ols;
pub mod strategy;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EnvironmentData;
use crate::error::{Error, Result};

pub use boosting::{BoostedFamily, BoostedModel};
pub use forest::{ForestFamily, ForestModel};
pub use ols::{OlsFamily, OlsModel};
pub use strategy::{
    build_strategy, impute_dataset, EnvDiagnostics, EnvImputer, ImputationDiagnostics, ImputerSpec,
    ShiftDelta, Strategy,
};

/// A fixed prediction rule `ĥ: ℝᵖ → ℝ`.
pub trait ImputationModel: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
    fn family(&self) -> Family;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ols,
    RandomForest,
    BoostedTrees,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::RandomForest => "random_forest",
            Family::BoostedTrees => "boosted_trees",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        find_family(name).map(|f| f.family())
    }

    pub fn is_tree(self) -> bool {
        !matches!(self, Family::Ols)
    }
}

/// Labeled rows an imputer learns from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != p * y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate values for {} training rows of width {p}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training rows".into()));
        }
        Ok(Self { p, x, y })
    }

    /// Labeled rows of an environment.
    pub fn from_labeled(env: &EnvironmentData) -> Self {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (_, row, out) in env.labeled() {
            x.extend_from_slice(row);
            y.push(out);
        }
        Self { p: env.p(), x, y }
    }

    /// Rows of several sets stacked in order.
    pub fn pooled(sets: &[TrainingSet]) -> Result<Self> {
        let p = sets.first().map_or(0, |s| s.p);
        if sets.iter().any(|s| s.p != p) {
            return Err(Error::DimensionMismatch(
                "training sets differ in covariate dimension".into(),
            ));
        }
        Ok(Self {
            p,
            x: sets.iter().flat_map(|s| s.x.iter().copied()).collect(),
            y: sets.iter().flat_map(|s| s.y.iter().copied()).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn require(&self, rows: usize) -> Result<()> {
        if self.len() < rows {
            return Err(Error::TooFewRows {
                required: rows,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Hyperparameters shared by the tree families; OLS ignores them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Trees in the forest, or boosting rounds.
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Shrinkage per boosting round.
    pub learning_rate: f64,
    /// Bootstrap resampling per forest tree.
    pub bootstrap: bool,
    /// Features examined per split; `None` examines all.
    pub max_features: Option<usize>,
    /// Row fraction drawn without replacement per boosting round.
    pub subsample: f64,
}

impl TreeParams {
    pub fn defaults_for(family: Family) -> Self {
        match family {
            Family::BoostedTrees => Self {
                n_trees: 200,
                max_depth: 3,
                min_leaf: 5,
                learning_rate: 0.1,
                bootstrap: false,
                max_features: None,
                subsample: 1.0,
            },
            Family::RandomForest | Family::Ols => Self {
                n_trees: 100,
                max_depth: 6,
                min_leaf: 5,
                learning_rate: 0.1,
                bootstrap: true,
                max_features: None,
                subsample: 1.0,
            },
        }
    }
}

/// Serializable fitted model of any registered family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    Ols(OlsModel),
    RandomForest(ForestModel),
    BoostedTrees(BoostedModel),
}

impl ImputationModel for FittedModel {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Ols(m) => m.predict(x),
            FittedModel::RandomForest(m) => m.predict(x),
            FittedModel::BoostedTrees(m) => m.predict(x),
        }
    }

    fn family(&self) -> Family {
        match self {
            FittedModel::Ols(_) => Family::Ols,
            FittedModel::RandomForest(_) => Family::RandomForest,
            FittedModel::BoostedTrees(_) => Family::BoostedTrees,
        }
    }
}

const MODEL_FORMAT: &str = "iaei-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: FittedModel,
}

impl FittedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Schema(format!(
                "model format `{}`, expected `{MODEL_FORMAT}`",
                file.format
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A trainable model family, registered by name.
pub trait ImputerFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn family(&self) -> Family;
    fn train(&self, rows: &TrainingSet, params: &TreeParams, seed: u64) -> Result<FittedModel>;
}

static FAMILIES: [&dyn ImputerFamily; 3] = [&OlsFamily, &ForestFamily, &BoostedFamily];

pub fn registered_families() -> &'static [&'static dyn ImputerFamily] {
    &FAMILIES
}

pub fn find_family(name: &str) -> Result<&'static dyn ImputerFamily> {
    FAMILIES
        .iter()
        .copied()
        .find(|f| f.name() == name)
        .ok_or_else(|| Error::UnknownName {
            kind: "imputer family",
            name: name.to_owned(),
        })
}

/// Trains a model of `family` on `rows`.
pub fn train(
    family: Family,
    rows: &TrainingSet,
    params: &TreeParams,
    seed: u64,
) -> Result<FittedModel> {
    find_family(family.name())?.train(rows, params, seed)
}
