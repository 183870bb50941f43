//! Multi-environment, partially labeled regression data.
//!
//! Covariates are stored row-major. Outcomes of unlabeled rows are `None`;
//! reading one through [`EnvironmentData::outcome`] is a programming error and
//! panics.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One environment: `N` rows of covariates, some of which carry an outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentData {
    env_id: String,
    p: usize,
    covariates: Vec<f64>,
    outcomes: Vec<Option<f64>>,
    weight: Option<f64>,
}

impl EnvironmentData {
    /// Builds an environment from a row-major `N × p` buffer.
    pub fn from_flat(
        env_id: impl Into<String>,
        p: usize,
        covariates: Vec<f64>,
        outcomes: Vec<Option<f64>>,
    ) -> Result<Self> {
        let env_id = env_id.into();
        if p == 0 {
            return Err(Error::DimensionMismatch(format!(
                "environment `{env_id}` has zero covariates"
            )));
        }
        if covariates.len() != p * outcomes.len() {
            return Err(Error::DimensionMismatch(format!(
                "environment `{env_id}`: {} covariate values for {} rows of width {p}",
                covariates.len(),
                outcomes.len()
            )));
        }
        Ok(Self {
            env_id,
            p,
            covariates,
            outcomes,
            weight: None,
        })
    }

    /// Builds an environment from per-row covariate vectors.
    pub fn from_rows(
        env_id: impl Into<String>,
        rows: &[Vec<f64>],
        outcomes: Vec<Option<f64>>,
    ) -> Result<Self> {
        let env_id = env_id.into();
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != outcomes.len() {
            return Err(Error::DimensionMismatch(format!(
                "environment `{env_id}`: {} rows but {} outcomes",
                rows.len(),
                outcomes.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "environment `{env_id}`: row {bad} has {} covariates, expected {p}",
                rows[bad].len()
            )));
        }
        Self::from_flat(env_id, p, rows.concat(), outcomes)
    }

    /// Sets the raw (unnormalized) environment weight.
    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Total row count `N`.
    pub fn n_rows(&self) -> usize {
        self.outcomes.len()
    }

    /// Labeled row count `n`.
    pub fn n_labeled(&self) -> usize {
        self.outcomes.iter().filter(|y| y.is_some()).count()
    }

    pub fn raw_weight(&self) -> Option<f64> {
        self.weight
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.covariates.chunks_exact(self.p)
    }

    pub fn covariates_flat(&self) -> &[f64] {
        &self.covariates
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.outcomes[i].is_some()
    }

    pub fn label_mask(&self) -> Vec<bool> {
        self.outcomes.iter().map(Option::is_some).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.outcomes.iter().all(Option::is_some)
    }

    /// Outcome of a labeled row.
    ///
    /// Panics when row `i` is unlabeled.
    pub fn outcome(&self, i: usize) -> f64 {
        match self.outcomes[i] {
            Some(y) => y,
            None => panic!(
                "read of unlabeled outcome: environment `{}`, row {i}",
                self.env_id
            ),
        }
    }

    pub fn outcome_opt(&self, i: usize) -> Option<f64> {
        self.outcomes[i]
    }

    pub fn outcomes(&self) -> &[Option<f64>] {
        &self.outcomes
    }

    /// `(row index, covariates, outcome)` for labeled rows in storage order.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, &[f64], f64)> {
        self.rows()
            .zip(&self.outcomes)
            .enumerate()
            .filter_map(|(i, (x, y))| y.map(|y| (i, x, y)))
    }

    /// Copy of this environment with the outcomes of `rows` removed.
    pub fn without_labels(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in rows {
            out.outcomes[i] = None;
        }
        out
    }

    /// Copy of this environment with every outcome replaced.
    pub fn with_outcomes(&self, outcomes: Vec<Option<f64>>) -> Result<Self> {
        if outcomes.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "environment `{}`: {} replacement outcomes for {} rows",
                self.env_id,
                outcomes.len(),
                self.n_rows()
            )));
        }
        Ok(Self {
            outcomes,
            ..self.clone()
        })
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut covariates = Vec::with_capacity(rows.len() * self.p);
        let mut outcomes = Vec::with_capacity(rows.len());
        for &i in rows {
            covariates.extend_from_slice(self.row(i));
            outcomes.push(self.outcomes[i]);
        }
        Self {
            env_id: self.env_id.clone(),
            p: self.p,
            covariates,
            outcomes,
            weight: self.weight,
        }
    }

    fn check(&self) -> Result<()> {
        if let Some(pos) = self.covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "environment `{}`, row {}, covariate x{}",
                self.env_id,
                pos / self.p,
                pos % self.p + 1
            )));
        }
        if let Some(i) = self
            .outcomes
            .iter()
            .position(|y| matches!(y, Some(v) if !v.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "environment `{}`, row {i}, outcome",
                self.env_id
            )));
        }
        if self.n_labeled() == 0 {
            return Err(Error::NoLabels(self.env_id.clone()));
        }
        if let Some(w) = self.weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight {
                    env: self.env_id.clone(),
                    weight: w,
                });
            }
        }
        Ok(())
    }
}

/// Empirical missing ratio `(N − n) / N`.
pub fn missing_ratio(env: &EnvironmentData) -> f64 {
    let total = env.n_rows();
    (total - env.n_labeled()) as f64 / total as f64
}

/// A validated collection of environments sharing covariate dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEnvDataset {
    environments: Vec<EnvironmentData>,
    p: usize,
    weights: Vec<f64>,
}

impl MultiEnvDataset {
    /// Validates the environments and attaches normalized weights.
    ///
    /// Environments without an explicit weight get `1/|E|` before
    /// normalization.
    pub fn new(environments: Vec<EnvironmentData>) -> Result<Self> {
        let Some(first) = environments.first() else {
            return Err(Error::TooFewEnvironments {
                required: 1,
                got: 0,
            });
        };
        let p = first.p();
        for env in &environments {
            if env.p() != p {
                return Err(Error::DimensionMismatch(format!(
                    "environment `{}` has p = {}, expected {p}",
                    env.env_id(),
                    env.p()
                )));
            }
            env.check()?;
        }
        let default = 1.0 / environments.len() as f64;
        let raw: Vec<f64> = environments
            .iter()
            .map(|e| e.raw_weight().unwrap_or(default))
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(Self {
            environments,
            p,
            weights,
        })
    }

    /// Re-validates; a no-op on already validated data.
    pub fn validate(self) -> Result<Self> {
        Self::new(self.environments)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn environments(&self) -> &[EnvironmentData] {
        &self.environments
    }

    pub fn into_environments(self) -> Vec<EnvironmentData> {
        self.environments
    }

    pub fn n_environments(&self) -> usize {
        self.environments.len()
    }

    /// Normalized weights, summing to one. This is what objectives consume.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw weights as supplied, with the `1/|E|` default filled in.
    pub fn raw_weights(&self) -> Vec<f64> {
        let default = 1.0 / self.environments.len() as f64;
        self.environments
            .iter()
            .map(|e| e.raw_weight().unwrap_or(default))
            .collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.environments
            .iter()
            .all(EnvironmentData::is_fully_labeled)
    }

    /// Replaces the normalized weights used by objectives, bypassing
    /// normalization. Only meant for checking scale behaviour of the
    /// objectives.
    pub fn with_internal_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.environments.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} environments",
                weights.len(),
                self.environments.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }
}

/// Per-row imputed outcomes `ĥ(x_i)` for every row of every environment,
/// aligned with [`MultiEnvDataset::environments`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputations(Vec<Vec<f64>>);

impl Imputations {
    pub fn new(per_env: Vec<Vec<f64>>) -> Self {
        Self(per_env)
    }

    pub fn env(&self, e: usize) -> &[f64] {
        &self.0[e]
    }

    pub fn per_env(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Vec<f64>> {
        self.0
    }

    /// Checks that every row of `data` has a finite prediction.
    pub fn check_against(&self, data: &MultiEnvDataset) -> Result<()> {
        if self.0.len() != data.n_environments() {
            return Err(Error::MissingImputation(format!(
                "predictions for {} environments, dataset has {}",
                self.0.len(),
                data.n_environments()
            )));
        }
        for (env, preds) in data.environments().iter().zip(&self.0) {
            if preds.len() != env.n_rows() {
                return Err(Error::MissingImputation(format!(
                    "environment `{}`: {} predictions for {} rows",
                    env.env_id(),
                    preds.len(),
                    env.n_rows()
                )));
            }
            if let Some(i) = preds.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "environment `{}`, row {i}, imputed outcome",
                    env.env_id()
                )));
            }
        }
        Ok(())
    }
}

/// Strictly increasing set of covariate indices.
///
/// Stored 0-based; displayed and serialized 1-based to match `x1 … xp`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// From 0-based indices; sorts and rejects duplicates or indices `>= p`.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DimensionMismatch(format!(
                "duplicate index in support {indices:?}"
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::DimensionMismatch(format!(
                "support index x{} outside 1..={p}",
                bad + 1
            )));
        }
        Ok(Self(indices))
    }

    /// From 1-based indices as used in user-facing interfaces.
    pub fn from_one_based(indices: &[usize], p: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::DimensionMismatch(
                "support indices are 1-based".into(),
            ));
        }
        Self::new(indices.iter().map(|j| j - 1).collect(), p)
    }

    /// All `j` with bit `j` set in `mask`.
    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|j| mask >> j & 1 == 1).collect())
    }

    pub fn full(p: usize) -> Self {
        Self((0..p).collect())
    }

    /// Indices of nonzero entries.
    pub fn of_nonzero(beta: &[f64]) -> Self {
        Self(
            beta.iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j)
                .collect(),
        )
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|j| j + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    /// Embeds support-restricted coefficients into a length-`p` vector.
    pub fn embed(&self, beta_s: &[f64], p: usize) -> Vec<f64> {
        let mut beta = vec![0.0; p];
        for (&j, &b) in self.0.iter().zip(beta_s) {
            beta[j] = b;
        }
        beta
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.0.iter().map(|j| format!("x{}", j + 1)).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

impl Serialize for Support {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Support {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let one_based = Vec::<usize>::deserialize(deserializer)?;
        Support::from_one_based(&one_based, usize::MAX).map_err(serde::de::Error::custom)
    }
}

/// Known invariant coefficients of a synthetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_star: Vec<f64>,
}

impl GroundTruth {
    pub fn new(beta_star: Vec<f64>) -> Self {
        Self { beta_star }
    }

    /// `{ j : beta_star[j] != 0 }`.
    pub fn support_star(&self) -> Support {
        Support::of_nonzero(&self.beta_star)
    }
}
