//! Pooled squared loss and invariance penalty, in complete-data and
//! imputation-adjusted form.
//!
//! All sums run environments in dataset order and rows in storage order with
//! compensated accumulation. The adjusted quantities are evaluated as
//! `labeled term + (all-rows imputed term − labeled imputed term)`; with no
//! unlabeled rows the bracket is exactly zero, so the adjusted loss and penalty
//! coincide bit-for-bit with their complete-data counterparts.

use serde::{Deserialize, Serialize};

use crate::data::{Imputations, MultiEnvDataset, Support};
use crate::error::{Error, Result};

/// Which residual moments enter the invariance penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyVariant {
    /// `|Ê[x_j r]|²` only.
    Basic,
    /// Adds the squared-covariate moment `|Ê[x_j² r]|²`.
    Enhanced,
}

impl PenaltyVariant {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyVariant::Basic => "basic",
            PenaltyVariant::Enhanced => "enhanced",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "basic" => Ok(Self::Basic),
            "enhanced" => Ok(Self::Enhanced),
            _ => Err(Error::UnknownName {
                kind: "penalty variant",
                name: name.to_owned(),
            }),
        }
    }
}

/// Complete-data objective on labeled rows, or the imputation-adjusted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    Complete,
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub loss: f64,
    pub penalty: f64,
    pub total: f64,
    pub gamma: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut count = 0usize;
    for v in values {
        acc.add(v);
        count += 1;
    }
    acc.value() / count as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_beta(data: &MultiEnvDataset, beta: &[f64]) -> Result<()> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, dataset has p = {}",
            beta.len(),
            data.p()
        )));
    }
    Ok(())
}

fn check_support(data: &MultiEnvDataset, support: &Support) -> Result<()> {
    if support.indices().iter().any(|&j| j >= data.p()) {
        return Err(Error::DimensionMismatch(format!(
            "support {support} exceeds p = {}",
            data.p()
        )));
    }
    Ok(())
}

/// `Σ_e ω_e Ê_n[(y − βᵀx)²]` over labeled rows.
pub fn empirical_loss(data: &MultiEnvDataset, beta: &[f64]) -> Result<f64> {
    check_beta(data, beta)?;
    let mut total = 0.0;
    for (env, w) in data.environments().iter().zip(data.weights()) {
        let risk = mean_of(env.labeled().map(|(_, x, y)| (y - dot(beta, x)).powi(2)));
        total += w * risk;
    }
    Ok(total)
}

/// Imputation-adjusted pooled loss
/// `Σ_e ω_e [Ê_N[(ĥ − βᵀx)²] + Ê_n[(y − βᵀx)² − (ĥ − βᵀx)²]]`.
///
/// Not clamped; may be negative in finite samples.
pub fn adjusted_loss(
    data: &MultiEnvDataset,
    imputations: &Imputations,
    beta: &[f64],
) -> Result<f64> {
    check_beta(data, beta)?;
    imputations.check_against(data)?;
    let mut total = 0.0;
    for (e, (env, w)) in data.environments().iter().zip(data.weights()).enumerate() {
        let h = imputations.env(e);
        let labeled = mean_of(env.labeled().map(|(_, x, y)| (y - dot(beta, x)).powi(2)));
        let imputed_all = mean_of(env.rows().zip(h).map(|(x, h)| (h - dot(beta, x)).powi(2)));
        let imputed_labeled = mean_of(env.labeled().map(|(i, x, _)| (h[i] - dot(beta, x)).powi(2)));
        total += w * (labeled + (imputed_all - imputed_labeled));
    }
    Ok(total)
}

/// Per-environment residual moments feeding the penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMoments {
    /// `Ê[x_j (y − βᵀx)]` (or its adjusted estimate), one per covariate.
    pub linear: Vec<f64>,
    /// `Ê[x_j² (y − βᵀx)]` (or its adjusted estimate), one per covariate.
    pub squared: Vec<f64>,
}

/// Residual moments for every covariate and environment.
///
/// In adjusted mode each moment is `Ê_N[x_j(ĥ − βᵀx)] + Ê_n[x_j(y − ĥ)]`,
/// evaluated as `Ê_n[x_j(y − βᵀx)] + (Ê_N[x_j(ĥ − βᵀx)] − Ê_n[x_j(ĥ − βᵀx)])`.
pub fn penalty_moments(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    beta: &[f64],
) -> Result<Vec<EnvMoments>> {
    check_beta(data, beta)?;
    if let Some(imp) = imputations {
        imp.check_against(data)?;
    }
    let p = data.p();
    let mut out = Vec::with_capacity(data.n_environments());
    for (e, env) in data.environments().iter().enumerate() {
        let mut linear = vec![0.0; p];
        let mut squared = vec![0.0; p];
        for j in 0..p {
            let lab_lin = mean_of(env.labeled().map(|(_, x, y)| x[j] * (y - dot(beta, x))));
            let lab_sq = mean_of(
                env.labeled()
                    .map(|(_, x, y)| x[j] * x[j] * (y - dot(beta, x))),
            );
            match imputations {
                None => {
                    linear[j] = lab_lin;
                    squared[j] = lab_sq;
                }
                Some(imp) => {
                    let h = imp.env(e);
                    let all_lin =
                        mean_of(env.rows().zip(h).map(|(x, h)| x[j] * (h - dot(beta, x))));
                    let all_sq = mean_of(
                        env.rows()
                            .zip(h)
                            .map(|(x, h)| x[j] * x[j] * (h - dot(beta, x))),
                    );
                    let labh_lin =
                        mean_of(env.labeled().map(|(i, x, _)| x[j] * (h[i] - dot(beta, x))));
                    let labh_sq = mean_of(
                        env.labeled()
                            .map(|(i, x, _)| x[j] * x[j] * (h[i] - dot(beta, x))),
                    );
                    linear[j] = lab_lin + (all_lin - labh_lin);
                    squared[j] = lab_sq + (all_sq - labh_sq);
                }
            }
        }
        out.push(EnvMoments { linear, squared });
    }
    Ok(out)
}

fn penalty_from_moments(
    data: &MultiEnvDataset,
    moments: &[EnvMoments],
    support: &Support,
    variant: PenaltyVariant,
) -> f64 {
    let mut total = 0.0;
    for &j in support.indices() {
        for (m, w) in moments.iter().zip(data.weights()) {
            let mut term = m.linear[j] * m.linear[j];
            if variant == PenaltyVariant::Enhanced {
                term += m.squared[j] * m.squared[j];
            }
            total += w * term;
        }
    }
    total
}

/// Invariance penalty on labeled rows, summed over `support`.
pub fn empirical_penalty(
    data: &MultiEnvDataset,
    beta: &[f64],
    support: &Support,
    variant: PenaltyVariant,
) -> Result<f64> {
    check_support(data, support)?;
    let moments = penalty_moments(data, None, beta)?;
    Ok(penalty_from_moments(data, &moments, support, variant))
}

/// Imputation-adjusted invariance penalty, summed over `support`.
pub fn adjusted_penalty(
    data: &MultiEnvDataset,
    imputations: &Imputations,
    beta: &[f64],
    support: &Support,
    variant: PenaltyVariant,
) -> Result<f64> {
    check_support(data, support)?;
    let moments = penalty_moments(data, Some(imputations), beta)?;
    Ok(penalty_from_moments(data, &moments, support, variant))
}

/// `loss + γ · penalty` in the requested mode.
pub fn objective(
    data: &MultiEnvDataset,
    beta: &[f64],
    support: &Support,
    gamma: f64,
    mode: ObjectiveMode,
    imputations: Option<&Imputations>,
    variant: PenaltyVariant,
) -> Result<ObjectiveValue> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Config(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    let (loss, penalty) = match mode {
        ObjectiveMode::Complete => (
            empirical_loss(data, beta)?,
            empirical_penalty(data, beta, support, variant)?,
        ),
        ObjectiveMode::Adjusted => {
            let imp = imputations.ok_or_else(|| {
                Error::MissingImputation("adjusted objective needs predictions".into())
            })?;
            (
                adjusted_loss(data, imp, beta)?,
                adjusted_penalty(data, imp, beta, support, variant)?,
            )
        }
    };
    Ok(ObjectiveValue {
        loss,
        penalty,
        total: loss + gamma * penalty,
        gamma,
    })
}
