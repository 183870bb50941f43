//! TOML configuration files.
//!
//! Sections are `[simulation]`, `[imputer]` (with `[imputer.trees]`),
//! `[search]`, `[estimate]` and `[cv]`; keys carry the field names of the
//! structures they fill. Every key is optional and unknown keys are
//! rejected.
//!
//! ```toml
//! [simulation]
//! models = ["model1"]
//! n_per_env = [1000]
//! missing_ratios = [0.7]
//! gammas = [1, 5, 10, 20]
//! replications = 100
//!
//! [imputer]
//! family = "boosted_trees"
//! strategy = "bias"
//! shift_delta = 0.5
//! ```

use std::path::Path;

use serde::Deserialize;

use super::cv::{CvConfig, EnvSplit};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::imputation::{Family, ImputerSpec, ShiftDelta, Strategy};
use crate::objectives::PenaltyVariant;
use crate::optimizer::SearchConfig;
use crate::simulation::dgp::SemModel;
use crate::simulation::{ImputerSource, SimulationSpec};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub imputer: ImputerSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub cv: CvSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub models: Option<Vec<SemModel>>,
    pub n_per_env: Option<Vec<usize>>,
    pub missing_ratios: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub variants: Option<Vec<PenaltyVariant>>,
    pub replications: Option<usize>,
    pub master_seed: Option<u64>,
    pub imputer_source: Option<ImputerSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputerSection {
    pub family: Option<Family>,
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub shift_delta: Option<ShiftDelta>,
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub trees: TreesSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreesSection {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub learning_rate: Option<f64>,
    pub bootstrap: Option<bool>,
    pub max_features: Option<usize>,
    pub subsample: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub max_support_dim: Option<usize>,
    pub ridge_jitter: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub methods: Option<Vec<Method>>,
    pub gammas: Option<Vec<f64>>,
    pub variants: Option<Vec<PenaltyVariant>>,
    pub center: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSplitKind {
    Column,
    Month,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub methods: Option<Vec<Method>>,
    pub gammas: Option<Vec<f64>>,
    pub variant: Option<PenaltyVariant>,
    pub mask_ratio: Option<f64>,
    pub env_split: Option<EnvSplitKind>,
    pub env_column: Option<String>,
    pub center: Option<bool>,
    pub seed: Option<u64>,
}

/// Options of the `estimate` command.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub methods: Vec<Method>,
    pub gammas: Vec<f64>,
    pub variants: Vec<PenaltyVariant>,
    pub center: bool,
    pub imputer: ImputerSpec,
    pub search: SearchConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::Config(e.message().to_owned() + &location(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Imputer settings, defaulting to `default_family` / `default_strategy`
    /// and their standard hyperparameters.
    pub fn imputer_spec(&self, default_family: Family, default_strategy: Strategy) -> ImputerSpec {
        let s = &self.imputer;
        let family = s.family.unwrap_or(default_family);
        let strategy = s.strategy.unwrap_or(default_strategy);
        let mut spec = ImputerSpec::new(family, strategy, s.seed.unwrap_or(0));
        if let Some(d) = &s.shift_delta {
            spec.shift_delta = d.clone();
        }
        if let Some(v) = s.noise_sd {
            spec.noise_sd = v;
        }
        let t = &s.trees;
        let p = &mut spec.trees;
        if let Some(v) = t.n_trees {
            p.n_trees = v;
        }
        if let Some(v) = t.max_depth {
            p.max_depth = v;
        }
        if let Some(v) = t.min_leaf {
            p.min_leaf = v;
        }
        if let Some(v) = t.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = t.bootstrap {
            p.bootstrap = v;
        }
        if t.max_features.is_some() {
            p.max_features = t.max_features;
        }
        if let Some(v) = t.subsample {
            p.subsample = v;
        }
        spec
    }

    pub fn search_config(&self) -> SearchConfig {
        let mut c = SearchConfig::default();
        if let Some(v) = self.search.max_support_dim {
            c.max_support_dim = v;
        }
        if let Some(v) = self.search.ridge_jitter {
            c.ridge_jitter = v;
        }
        c
    }

    pub fn simulation_spec(&self) -> Result<SimulationSpec> {
        let s = &self.simulation;
        let d = SimulationSpec::default();
        let spec = SimulationSpec {
            models: s.models.clone().unwrap_or(d.models),
            n_per_env: s.n_per_env.clone().unwrap_or(d.n_per_env),
            missing_ratios: s.missing_ratios.clone().unwrap_or(d.missing_ratios),
            imputer: self.imputer_spec(d.imputer.family, d.imputer.strategy),
            imputer_source: s.imputer_source.unwrap_or(d.imputer_source),
            gammas: s.gammas.clone().unwrap_or(d.gammas),
            methods: s.methods.clone().unwrap_or(d.methods),
            variants: s.variants.clone().unwrap_or(d.variants),
            replications: s.replications.unwrap_or(d.replications),
            master_seed: s.master_seed.unwrap_or(d.master_seed),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn estimate_options(&self) -> Result<EstimateOptions> {
        let e = &self.estimate;
        let options = EstimateOptions {
            methods: e.methods.clone().unwrap_or_else(|| Method::ALL.to_vec()),
            gammas: e
                .gammas
                .clone()
                .unwrap_or_else(|| vec![1.0, 5.0, 10.0, 20.0]),
            variants: e
                .variants
                .clone()
                .unwrap_or_else(|| vec![PenaltyVariant::Basic, PenaltyVariant::Enhanced]),
            center: e.center.unwrap_or(false),
            imputer: self.imputer_spec(Family::Ols, Strategy::Precise),
            search: self.search_config(),
        };
        if options.methods.is_empty() || options.gammas.is_empty() || options.variants.is_empty() {
            return Err(Error::Config(
                "estimate needs methods, gammas and variants".into(),
            ));
        }
        for &g in &options.gammas {
            SearchConfig {
                gamma: g,
                ..options.search.clone()
            }
            .check()?;
        }
        Ok(options)
    }

    pub fn cv_config(&self) -> Result<CvConfig> {
        let c = &self.cv;
        let mut config = CvConfig::new(self.imputer_spec(Family::BoostedTrees, Strategy::Precise));
        if let Some(v) = &c.methods {
            config.methods = v.clone();
        }
        if let Some(v) = &c.gammas {
            config.gammas = v.clone();
        }
        if let Some(v) = c.variant {
            config.variant = v;
        }
        if let Some(v) = c.mask_ratio {
            config.mask_ratio = v;
        }
        config.env_split = match (c.env_split, &c.env_column) {
            (Some(EnvSplitKind::Month), Some(_)) => {
                return Err(Error::Config(
                    "`env_column` only applies with `env_split = \"column\"`".into(),
                ))
            }
            (Some(EnvSplitKind::Month), None) => EnvSplit::Month,
            (_, column) => EnvSplit::Column(column.clone().unwrap_or_else(|| "env".into())),
        };
        if let Some(v) = c.center {
            config.center = v;
        }
        if let Some(v) = c.seed {
            config.seed = v;
        }
        let search = self.search_config();
        config.max_support_dim = search.max_support_dim;
        config.ridge_jitter = search.ridge_jitter;
        Ok(config)
    }
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    span.map_or_else(String::new, |s| {
        let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
        format!(" (line {line})")
    })
}
