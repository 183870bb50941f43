//! Replication studies over a grid of models, sample sizes, missing ratios,
//! methods, penalty variants and `γ` values.
//!
//! Replication `r` derives its streams from `(master_seed, purpose, model,
//! n, r, ...)`, so a replication's output never depends on which other
//! replications run, in what order, or on how many threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{self, SemModel};
use super::{apply_mcar, compute_fdr, compute_l2_error, masked_count};
use crate::data::{Imputations, MultiEnvDataset, Support};
use crate::error::{Error, Result};
use crate::estimators::{Method, PreparedFit};
use crate::imputation::{
    build_strategy, impute_dataset, Family, ImputerSpec, Strategy, TrainingSet,
};
use crate::objectives::PenaltyVariant;
use crate::optimizer::SearchConfig;
use crate::rng::{self, tag};

pub const REPORT_SCHEMA: &str = "iaei-report/1";

/// Where the imputer's training rows come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputerSource {
    /// A fresh sample of the same size from the same model.
    FreshSample,
    /// The labeled rows of the evaluation data.
    LabeledSubset,
    /// No model: predictions are the true outcomes.
    TrueLabels,
}

impl ImputerSource {
    pub fn name(self) -> &'static str {
        match self {
            ImputerSource::FreshSample => "fresh_sample",
            ImputerSource::LabeledSubset => "labeled_subset",
            ImputerSource::TrueLabels => "true_labels",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Self::FreshSample, Self::LabeledSubset, Self::TrueLabels]
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "imputer source",
                name: name.to_owned(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub models: Vec<SemModel>,
    pub n_per_env: Vec<usize>,
    pub missing_ratios: Vec<f64>,
    pub imputer: ImputerSpec,
    pub imputer_source: ImputerSource,
    pub gammas: Vec<f64>,
    pub methods: Vec<Method>,
    pub variants: Vec<PenaltyVariant>,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            models: vec![SemModel::Model0],
            n_per_env: vec![500],
            missing_ratios: vec![0.3, 0.5, 0.7],
            imputer: ImputerSpec::new(Family::Ols, Strategy::Precise, 0),
            imputer_source: ImputerSource::FreshSample,
            gammas: vec![1.0, 5.0, 10.0, 20.0],
            methods: Method::ALL.to_vec(),
            variants: vec![PenaltyVariant::Basic, PenaltyVariant::Enhanced],
            replications: 100,
            master_seed: 0,
        }
    }
}

fn config_error(message: String) -> Error {
    Error::Config(message)
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("models", self.models.is_empty()),
            ("n_per_env", self.n_per_env.is_empty()),
            ("missing_ratios", self.missing_ratios.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("methods", self.methods.is_empty()),
            ("variants", self.variants.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(config_error(format!("`{name}` must not be empty")));
        }
        if self.replications == 0 {
            return Err(config_error("`replications` must be at least 1".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(config_error(format!("gamma must be nonnegative, got {g}")));
        }
        for &n in &self.n_per_env {
            if n < 2 {
                return Err(config_error(format!(
                    "n_per_env must be at least 2, got {n}"
                )));
            }
            for &ratio in &self.missing_ratios {
                if !(0.0..1.0).contains(&ratio) {
                    return Err(config_error(format!(
                        "missing ratio must be in [0, 1), got {ratio}"
                    )));
                }
                if masked_count(n, ratio) >= n {
                    return Err(Error::AllMissing { ratio, n });
                }
                if self.imputer_source == ImputerSource::LabeledSubset
                    && n - masked_count(n, ratio) < 2
                {
                    return Err(config_error(format!(
                        "ratio {ratio} leaves fewer than 2 labeled rows to train on at n = {n}"
                    )));
                }
            }
        }
        if self.imputer.noise_sd.is_nan() || self.imputer.noise_sd < 0.0 {
            return Err(config_error(format!(
                "noise_sd must be nonnegative, got {}",
                self.imputer.noise_sd
            )));
        }
        self.imputer.shift_delta.resolve(dgp::P)?;
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.models.len()
            * self.n_per_env.len()
            * self.missing_ratios.len()
            * self.methods.len()
            * self.variants.len()
            * self.gammas.len()
    }

    /// Cell keys in report order.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::with_capacity(self.cell_count());
        for &model in &self.models {
            for &n_per_env in &self.n_per_env {
                for &missing_ratio in &self.missing_ratios {
                    for &method in &self.methods {
                        for &variant in &self.variants {
                            for &gamma in &self.gammas {
                                keys.push(CellKey {
                                    model,
                                    n_per_env,
                                    missing_ratio,
                                    method,
                                    variant,
                                    gamma,
                                });
                            }
                        }
                    }
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub model: SemModel,
    pub n_per_env: usize,
    pub missing_ratio: f64,
    pub method: Method,
    pub variant: PenaltyVariant,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetric {
    pub replication: usize,
    pub fdr: f64,
    pub l2_error: f64,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

/// All cells of one replication, in [`SimulationSpec::cell_keys`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutput {
    pub replication: usize,
    pub cells: Vec<std::result::Result<ReplicationMetric, String>>,
}

fn training_sets(data: &MultiEnvDataset) -> Vec<TrainingSet> {
    data.environments()
        .iter()
        .map(TrainingSet::from_labeled)
        .collect()
}

fn true_outcomes(full: &MultiEnvDataset) -> Imputations {
    Imputations::new(
        full.environments()
            .iter()
            .map(|env| (0..env.n_rows()).map(|i| env.outcome(i)).collect())
            .collect(),
    )
}

fn predict(
    spec: &SimulationSpec,
    imputer_seed: u64,
    train: &[TrainingSet],
    data: &MultiEnvDataset,
) -> Result<Imputations> {
    let imputer = ImputerSpec {
        seed: imputer_seed,
        ..spec.imputer.clone()
    };
    let models = build_strategy(&imputer, train)?;
    Ok(impute_dataset(&models, data)?.0)
}

/// Runs every grid cell for replication `index`.
///
/// Failures of individual cells (or of the imputer shared by a group of
/// cells) are recorded in place rather than aborting the replication.
pub fn run_replication(spec: &SimulationSpec, index: usize) -> Result<ReplicationOutput> {
    spec.validate()?;
    let master = spec.master_seed;
    let r = index as u64;
    let per_group = spec.methods.len() * spec.variants.len() * spec.gammas.len();
    let truth = dgp::ground_truth();
    let mut cells = Vec::with_capacity(spec.cell_count());
    for &model in &spec.models {
        for &n in &spec.n_per_env {
            let m = model.index();
            let n64 = n as u64;
            let full = dgp::generate_dataset(
                model,
                n,
                rng::derive_seed(master, &[tag("data"), m, n64, r]),
            )?;
            let fresh_imputations = match spec.imputer_source {
                ImputerSource::FreshSample => {
                    let sample = dgp::generate_dataset(
                        model,
                        n,
                        rng::derive_seed(master, &[tag("imputer-train"), m, n64, r]),
                    )?;
                    let seed =
                        rng::derive_seed(master, &[tag("imputer"), spec.imputer.seed, m, n64, r]);
                    Some(
                        predict(spec, seed, &training_sets(&sample), &full)
                            .map_err(|e| e.to_string()),
                    )
                }
                ImputerSource::TrueLabels => Some(Ok(true_outcomes(&full))),
                ImputerSource::LabeledSubset => None,
            };
            for &ratio in &spec.missing_ratios {
                let bits = ratio.to_bits();
                let masked = full
                    .environments()
                    .iter()
                    .enumerate()
                    .map(|(e, env)| {
                        let mut s = rng::stream(master, &[tag("mask"), m, n64, bits, r, e as u64]);
                        apply_mcar(env, ratio, &mut s)
                    })
                    .collect::<Result<Vec<_>>>()
                    .and_then(MultiEnvDataset::new)?;
                // Predictions depend only on covariates, so those made on the
                // full data apply unchanged to the masked copy.
                let imputations = match &fresh_imputations {
                    Some(p) => p.clone(),
                    None => {
                        let seed = rng::derive_seed(
                            master,
                            &[tag("imputer"), spec.imputer.seed, m, n64, bits, r],
                        );
                        predict(spec, seed, &training_sets(&masked), &masked)
                            .map_err(|e| e.to_string())
                    }
                };
                let imputations = match imputations {
                    Ok(i) => i,
                    Err(message) => {
                        cells.extend((0..per_group).map(|_| Err(format!("imputer: {message}"))));
                        continue;
                    }
                };
                for &method in &spec.methods {
                    let data = if method == Method::Oracle {
                        &full
                    } else {
                        &masked
                    };
                    let prepared = PreparedFit::new(method, data, Some(&imputations));
                    for &variant in &spec.variants {
                        for &gamma in &spec.gammas {
                            let outcome =
                                prepared.as_ref().map_err(|e| e.to_string()).and_then(|p| {
                                    let fit = p
                                        .fit(&SearchConfig::with_gamma(gamma, variant))
                                        .map_err(|e| e.to_string())?;
                                    let l2_error = compute_l2_error(&fit.beta, &truth)
                                        .map_err(|e| e.to_string())?;
                                    Ok(ReplicationMetric {
                                        replication: index,
                                        fdr: compute_fdr(&fit.support, &truth),
                                        l2_error,
                                        support: fit.support,
                                    })
                                });
                            cells.push(outcome);
                        }
                    }
                }
            }
        }
    }
    Ok(ReplicationOutput {
        replication: index,
        cells,
    })
}

/// Aggregated statistics of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub family: Family,
    pub strategy: Strategy,
    /// Successful replications; every mean below is over exactly this many values.
    pub replications: usize,
    pub mean_fdr: Option<f64>,
    pub sd_fdr: Option<f64>,
    pub mean_l2_error: Option<f64>,
    pub sd_l2_error: Option<f64>,
    /// Fraction of successful replications selecting `x_j`, for `j = 1..p`.
    pub selection_frequency: Vec<f64>,
    pub failures: Vec<ReplicationFailure>,
    pub per_replication: Vec<ReplicationMetric>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

impl CellSummary {
    fn new(
        key: CellKey,
        spec: &SimulationSpec,
        mut per_replication: Vec<ReplicationMetric>,
        mut failures: Vec<ReplicationFailure>,
    ) -> Self {
        per_replication.sort_by_key(|m| m.replication);
        failures.sort_by_key(|f| f.replication);
        let fdr: Vec<f64> = per_replication.iter().map(|m| m.fdr).collect();
        let l2: Vec<f64> = per_replication.iter().map(|m| m.l2_error).collect();
        let (mean_fdr, sd_fdr) = mean_sd(&fdr);
        let (mean_l2_error, sd_l2_error) = mean_sd(&l2);
        let count = per_replication.len();
        let selection_frequency = (0..dgp::P)
            .map(|j| {
                if count == 0 {
                    0.0
                } else {
                    per_replication
                        .iter()
                        .filter(|m| m.support.contains(j))
                        .count() as f64
                        / count as f64
                }
            })
            .collect();
        Self {
            key,
            family: spec.imputer.family,
            strategy: spec.imputer.strategy,
            replications: count,
            mean_fdr,
            sd_fdr,
            mean_l2_error,
            sd_l2_error,
            selection_frequency,
            failures,
            per_replication,
        }
    }

    /// Monte Carlo standard error of the mean ℓ2 error.
    pub fn se_l2_error(&self) -> Option<f64> {
        self.sd_l2_error
            .map(|sd| sd / (self.replications as f64).sqrt())
    }

    /// Monte Carlo standard error of the mean FDR.
    pub fn se_fdr(&self) -> Option<f64> {
        self.sd_fdr.map(|sd| sd / (self.replications as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: SimulationSpec,
    /// Half-open range of replication indices included.
    pub replication_range: (usize, usize),
    pub seed_derivation: String,
    pub package_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema: String,
    pub kind: String,
    pub provenance: Provenance,
    pub cells: Vec<CellSummary>,
}

const SEED_DERIVATION: &str = "splitmix64 chain over (master_seed, purpose tag, model, n_per_env, [ratio bits], replication, [environment]); ChaCha12 per stream";

fn assemble(
    spec: &SimulationSpec,
    range: (usize, usize),
    outputs: Vec<ReplicationOutput>,
) -> SimulationReport {
    let keys = spec.cell_keys();
    let mut metrics: Vec<Vec<ReplicationMetric>> = vec![Vec::new(); keys.len()];
    let mut failures: Vec<Vec<ReplicationFailure>> = vec![Vec::new(); keys.len()];
    for out in outputs {
        for (c, cell) in out.cells.into_iter().enumerate() {
            match cell {
                Ok(m) => metrics[c].push(m),
                Err(message) => failures[c].push(ReplicationFailure {
                    replication: out.replication,
                    message,
                }),
            }
        }
    }
    let cells = keys
        .into_iter()
        .zip(metrics.into_iter().zip(failures))
        .map(|(key, (m, f))| CellSummary::new(key, spec, m, f))
        .collect();
    SimulationReport {
        schema: REPORT_SCHEMA.into(),
        kind: "simulation".into(),
        provenance: Provenance {
            spec: spec.clone(),
            replication_range: range,
            seed_derivation: SEED_DERIVATION.into(),
            package_version: env!("CARGO_PKG_VERSION").into(),
        },
        cells,
    }
}

/// Runs replications `start..end` in parallel.
pub fn run_study_range(
    spec: &SimulationSpec,
    start: usize,
    end: usize,
) -> Result<SimulationReport> {
    spec.validate()?;
    if start >= end {
        return Err(Error::Config(format!(
            "empty replication range {start}..{end}"
        )));
    }
    let outputs = (start..end)
        .into_par_iter()
        .map(|r| run_replication(spec, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(spec, (start, end), outputs))
}

/// Runs all `spec.replications` replications.
pub fn run_study(spec: &SimulationSpec) -> Result<SimulationReport> {
    run_study_range(spec, 0, spec.replications)
}

impl SimulationReport {
    /// Combines reports over disjoint replication ranges of the same study.
    pub fn merge(parts: &[SimulationReport]) -> Result<SimulationReport> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("nothing to merge".into()))?;
        let spec = &first.provenance.spec;
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(parts.len());
        for part in parts {
            if part.provenance.spec != *spec || part.cells.len() != first.cells.len() {
                return Err(Error::Config("reports come from different studies".into()));
            }
            ranges.push(part.provenance.replication_range);
        }
        ranges.sort_unstable();
        if ranges.windows(2).any(|w| w[0].1 != w[1].0) {
            return Err(Error::Config(format!(
                "replication ranges {ranges:?} are not contiguous and disjoint"
            )));
        }
        let range = (ranges[0].0, ranges[ranges.len() - 1].1);
        let cells = (0..first.cells.len())
            .map(|c| {
                let per = parts
                    .iter()
                    .flat_map(|p| p.cells[c].per_replication.iter().cloned())
                    .collect();
                let fails = parts
                    .iter()
                    .flat_map(|p| p.cells[c].failures.iter().cloned())
                    .collect();
                CellSummary::new(first.cells[c].key, spec, per, fails)
            })
            .collect();
        Ok(SimulationReport {
            schema: first.schema.clone(),
            kind: first.kind.clone(),
            provenance: Provenance {
                replication_range: range,
                ..first.provenance.clone()
            },
            cells,
        })
    }

    /// The cell with the given key, if present.
    pub fn cell(&self, key: &CellKey) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.key == *key)
    }
}
