//! Synthetic data, MCAR masking, selection metrics and replication studies.

pub mod dgp;
pub mod study;

use rand::seq::index::sample;
use rand::Rng;

use crate::data::{EnvironmentData, GroundTruth, Support};
use crate::error::{Error, Result};

pub use dgp::{
    generate, generate_dataset, generate_row, Gaussian, NoiseSource, SemModel, ZeroNoise,
};
pub use study::{
    run_replication, run_study, run_study_range, CellKey, CellSummary, ImputerSource,
    ReplicationMetric, ReplicationOutput, SimulationReport, SimulationSpec,
};

/// Number of rows masked out of `n` at ratio `ratio`.
pub fn masked_count(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio).round() as usize
}

/// Removes the outcomes of exactly `round(N·ratio)` rows chosen uniformly
/// without replacement.
pub fn apply_mcar<R: Rng>(
    env: &EnvironmentData,
    ratio: f64,
    rng: &mut R,
) -> Result<EnvironmentData> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!(
            "missing ratio must be in [0, 1), got {ratio}"
        )));
    }
    let n = env.n_rows();
    let k = masked_count(n, ratio);
    if k >= n {
        return Err(Error::AllMissing { ratio, n });
    }
    if k == 0 {
        return Ok(env.clone());
    }
    let rows = sample(rng, n, k).into_vec();
    Ok(env.without_labels(&rows))
}

/// `|Ŝ \ S*| / max(|Ŝ|, 1)`.
pub fn compute_fdr(selected: &Support, truth: &GroundTruth) -> f64 {
    let star = truth.support_star();
    let false_hits = selected
        .indices()
        .iter()
        .filter(|&&j| !star.contains(j))
        .count();
    false_hits as f64 / selected.len().max(1) as f64
}

/// `‖β̂ − β*‖₂`.
pub fn compute_l2_error(beta_hat: &[f64], truth: &GroundTruth) -> Result<f64> {
    if beta_hat.len() != truth.beta_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} coefficients, truth has {}",
            beta_hat.len(),
            truth.beta_star.len()
        )));
    }
    Ok(beta_hat
        .iter()
        .zip(&truth.beta_star)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}
