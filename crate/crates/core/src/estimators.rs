//! The five estimation methods.
//!
//! Each method is a dataset view plus an objective mode:
//!
//! | method          | view                                   | mode     |
//! |-----------------|----------------------------------------|----------|
//! | `iaei`          | original data and predictions          | adjusted |
//! | `oracle`        | fully labeled data, untouched          | complete |
//! | `eills_observe` | labeled rows only                      | complete |
//! | `eills_impute`  | every outcome replaced by `ĥ(x)`       | complete |
//! | `eills_mix`     | observed `y`, `ĥ(x)` where missing     | complete |
//!
//! Inputs are put in a canonical order (environments by id, rows by value)
//! before fitting, so results do not depend on the order rows arrive in.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{EnvironmentData, Imputations, MultiEnvDataset, Support};
use crate::error::{Error, Result};
use crate::objectives::{objective, ObjectiveMode, ObjectiveValue, PenaltyVariant};
use crate::optimizer::{search_stats, MomentStats, SearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iaei,
    Oracle,
    EillsObserve,
    EillsImpute,
    EillsMix,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Iaei,
        Method::Oracle,
        Method::EillsObserve,
        Method::EillsImpute,
        Method::EillsMix,
    ];

    pub fn name(self) -> &'static str {
        self.estimator().name()
    }

    pub fn parse(name: &str) -> Result<Self> {
        find_estimator(name).map(|e| e.method())
    }

    pub fn estimator(self) -> &'static dyn Estimator {
        ESTIMATORS[self as usize]
    }

    /// Whether the method consumes imputed outcomes.
    pub fn needs_imputations(self) -> bool {
        matches!(self, Method::Iaei | Method::EillsImpute | Method::EillsMix)
    }
}

/// The data a method actually fits on.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub data: MultiEnvDataset,
    /// Present only for adjusted-mode methods.
    pub imputations: Option<Imputations>,
    pub mode: ObjectiveMode,
}

/// A registered estimation method.
pub trait Estimator: Send + Sync {
    fn method(&self) -> Method;
    fn name(&self) -> &'static str;
    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
    ) -> Result<View>;
}

fn require_imputations<'a>(
    method: &str,
    data: &MultiEnvDataset,
    imputations: Option<&'a Imputations>,
) -> Result<&'a Imputations> {
    let imp = imputations
        .ok_or_else(|| Error::MissingImputation(format!("method `{method}` needs predictions")))?;
    imp.check_against(data)?;
    Ok(imp)
}

fn complete(data: MultiEnvDataset) -> View {
    View {
        data,
        imputations: None,
        mode: ObjectiveMode::Complete,
    }
}

fn relabel(
    data: &MultiEnvDataset,
    imp: &Imputations,
    pick: impl Fn(Option<f64>, f64) -> f64,
) -> Result<MultiEnvDataset> {
    let envs = data
        .environments()
        .iter()
        .enumerate()
        .map(|(e, env)| {
            let outcomes = env
                .outcomes()
                .iter()
                .zip(imp.env(e))
                .map(|(&y, &h)| Some(pick(y, h)))
                .collect();
            env.with_outcomes(outcomes)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiEnvDataset::new(envs)
}

pub struct IaeiEstimator;
pub struct OracleEstimator;
pub struct ObserveEstimator;
pub struct ImputeEstimator;
pub struct MixEstimator;

impl Estimator for IaeiEstimator {
    fn method(&self) -> Method {
        Method::Iaei
    }

    fn name(&self) -> &'static str {
        "iaei"
    }

    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
    ) -> Result<View> {
        let imp = require_imputations(self.name(), data, imputations)?;
        Ok(View {
            data: data.clone(),
            imputations: Some(imp.clone()),
            mode: ObjectiveMode::Adjusted,
        })
    }
}

impl Estimator for OracleEstimator {
    fn method(&self) -> Method {
        Method::Oracle
    }

    fn name(&self) -> &'static str {
        "oracle"
    }

    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        _imputations: Option<&Imputations>,
    ) -> Result<View> {
        if let Some(env) = data.environments().iter().find(|e| !e.is_fully_labeled()) {
            return Err(Error::OracleNeedsLabels(env.env_id().to_owned()));
        }
        Ok(complete(data.clone()))
    }
}

impl Estimator for ObserveEstimator {
    fn method(&self) -> Method {
        Method::EillsObserve
    }

    fn name(&self) -> &'static str {
        "eills_observe"
    }

    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        _imputations: Option<&Imputations>,
    ) -> Result<View> {
        let envs = data
            .environments()
            .iter()
            .map(|env| {
                let rows: Vec<usize> = env.labeled().map(|(i, _, _)| i).collect();
                env.select_rows(&rows)
            })
            .collect();
        Ok(complete(MultiEnvDataset::new(envs)?))
    }
}

impl Estimator for ImputeEstimator {
    fn method(&self) -> Method {
        Method::EillsImpute
    }

    fn name(&self) -> &'static str {
        "eills_impute"
    }

    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
    ) -> Result<View> {
        let imp = require_imputations(self.name(), data, imputations)?;
        Ok(complete(relabel(data, imp, |_, h| h)?))
    }
}

impl Estimator for MixEstimator {
    fn method(&self) -> Method {
        Method::EillsMix
    }

    fn name(&self) -> &'static str {
        "eills_mix"
    }

    fn prepare_view(
        &self,
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
    ) -> Result<View> {
        let imp = require_imputations(self.name(), data, imputations)?;
        Ok(complete(relabel(data, imp, |y, h| y.unwrap_or(h))?))
    }
}

/// Indexed by `Method as usize`.
static ESTIMATORS: [&dyn Estimator; 5] = [
    &IaeiEstimator,
    &OracleEstimator,
    &ObserveEstimator,
    &ImputeEstimator,
    &MixEstimator,
];

pub fn registered_estimators() -> &'static [&'static dyn Estimator] {
    &ESTIMATORS
}

pub fn find_estimator(name: &str) -> Result<&'static dyn Estimator> {
    ESTIMATORS
        .iter()
        .copied()
        .find(|e| e.name() == name)
        .ok_or_else(|| Error::UnknownName {
            kind: "method",
            name: name.to_owned(),
        })
}

/// Output of a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub variant: PenaltyVariant,
    pub gamma: f64,
    pub support: Support,
    /// Length `p`, zero off the support.
    pub beta: Vec<f64>,
    pub objective: f64,
    pub loss_part: f64,
    pub penalty_part: f64,
}

fn cmp_rows(env: &EnvironmentData, imp: Option<&[f64]>, a: usize, b: usize) -> Ordering {
    let by_x = env
        .row(a)
        .iter()
        .zip(env.row(b))
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal);
    let by_y = || match (env.outcome_opt(a), env.outcome_opt(b)) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(u), Some(v)) => u.total_cmp(&v),
    };
    let by_h = || imp.map_or(Ordering::Equal, |h| h[a].total_cmp(&h[b]));
    by_x.then_with(by_y).then_with(by_h)
}

/// Sorts environments by id and rows by `(x, y, ĥ)`, carrying predictions along.
pub fn canonicalize(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
) -> Result<(MultiEnvDataset, Option<Imputations>)> {
    if let Some(imp) = imputations {
        imp.check_against(data)?;
    }
    let envs = data.environments();
    let mut env_order: Vec<usize> = (0..envs.len()).collect();
    env_order.sort_by(|&a, &b| envs[a].env_id().cmp(envs[b].env_id()));
    let mut out_envs = Vec::with_capacity(envs.len());
    let mut out_imp = Vec::with_capacity(envs.len());
    for &e in &env_order {
        let env = &envs[e];
        let h = imputations.map(|imp| imp.env(e));
        let mut rows: Vec<usize> = (0..env.n_rows()).collect();
        rows.sort_by(|&a, &b| cmp_rows(env, h, a, b));
        out_envs.push(env.select_rows(&rows));
        if let Some(h) = h {
            out_imp.push(rows.iter().map(|&i| h[i]).collect());
        }
    }
    let data = MultiEnvDataset::new(out_envs)?;
    Ok((data, imputations.map(|_| Imputations::new(out_imp))))
}

/// A method's view with its sufficient statistics, reusable across `γ`
/// values and penalty variants.
#[derive(Debug, Clone)]
pub struct PreparedFit {
    method: Method,
    view: View,
    stats: MomentStats,
}

impl PreparedFit {
    pub fn new(
        method: Method,
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
    ) -> Result<Self> {
        if data.n_environments() < 2 {
            return Err(Error::TooFewEnvironments {
                required: 2,
                got: data.n_environments(),
            });
        }
        let imputations = if method.needs_imputations() {
            imputations
        } else {
            None
        };
        let (data, imputations) = canonicalize(data, imputations)?;
        let view = method
            .estimator()
            .prepare_view(&data, imputations.as_ref())?;
        let stats = MomentStats::new(&view.data, view.imputations.as_ref(), view.mode)?;
        Ok(Self {
            method,
            view,
            stats,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn view(&self) -> &View {
        &self.view
    }

    /// Objective of an arbitrary coefficient vector on this view.
    pub fn evaluate(
        &self,
        beta: &[f64],
        gamma: f64,
        variant: PenaltyVariant,
    ) -> Result<ObjectiveValue> {
        let support = Support::of_nonzero(beta);
        objective(
            &self.view.data,
            beta,
            &support,
            gamma,
            self.view.mode,
            self.view.imputations.as_ref(),
            variant,
        )
    }

    pub fn fit(&self, config: &SearchConfig) -> Result<FitResult> {
        let solution = search_stats(&self.stats, config)?;
        let value = objective(
            &self.view.data,
            &solution.beta,
            &solution.support,
            config.gamma,
            self.view.mode,
            self.view.imputations.as_ref(),
            config.variant,
        )?;
        Ok(FitResult {
            method: self.method,
            variant: config.variant,
            gamma: config.gamma,
            support: solution.support,
            beta: solution.beta,
            objective: value.total,
            loss_part: value.loss,
            penalty_part: value.penalty,
        })
    }
}

/// Fits `method` once with `config`.
pub fn fit(
    method: Method,
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    config: &SearchConfig,
) -> Result<FitResult> {
    PreparedFit::new(method, data, imputations)?.fit(config)
}

/// Fits `method` at every `γ` in `gammas`, sharing the view.
pub fn fit_grid(
    method: Method,
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    gammas: &[f64],
    config: &SearchConfig,
) -> Result<Vec<FitResult>> {
    let prepared = PreparedFit::new(method, data, imputations)?;
    gammas
        .iter()
        .map(|&gamma| {
            prepared.fit(&SearchConfig {
                gamma,
                ..config.clone()
            })
        })
        .collect()
}
