//! Exact minimization of the objective over supports.
//!
//! Restricted to a fixed support `S` the objective is a convex quadratic in
//! `β_S`: every penalized moment is affine in `β` and the loss is quadratic.
//! [`MomentStats`] holds the per-environment sufficient statistics once per
//! dataset; each support then assembles a small [`QuadraticForm`] and solves
//! its normal equations. [`search`] enumerates every support.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Imputations, MultiEnvDataset, Support};
use crate::error::{Error, Result};
use crate::objectives::{CompensatedSum, ObjectiveMode, PenaltyVariant};

/// Absolute tolerance under which two objective values are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Pivot ratio below which an unjittered Cholesky factor is treated as failed.
const PIVOT_RATIO_FLOOR: f64 = 1e-13;

/// Sufficient statistics of one environment.
///
/// In complete mode every moment is over labeled rows. In adjusted mode the
/// second moments run over all rows, and outcome moments are
/// `Ê_n[·y] + (Ê_N[·ĥ] − Ê_n[·ĥ])`.
#[derive(Debug, Clone)]
struct EnvStats {
    /// `Ê[x xᵀ]`.
    xx: DMatrix<f64>,
    /// `Ê[x y]`.
    xy: DVector<f64>,
    /// `Ê[y²]`.
    yy: f64,
    /// `Ê[x_j² x_k]` at `(j, k)`.
    x2x: DMatrix<f64>,
    /// `Ê[x_j² y]`.
    x2y: DVector<f64>,
}

struct Accumulator {
    p: usize,
    count: usize,
    xx: Vec<CompensatedSum>,
    x2x: Vec<CompensatedSum>,
    xy: Vec<CompensatedSum>,
    x2y: Vec<CompensatedSum>,
    yy: CompensatedSum,
}

impl Accumulator {
    fn new(p: usize) -> Self {
        Self {
            p,
            count: 0,
            xx: vec![CompensatedSum::default(); p * p],
            x2x: vec![CompensatedSum::default(); p * p],
            xy: vec![CompensatedSum::default(); p],
            x2y: vec![CompensatedSum::default(); p],
            yy: CompensatedSum::default(),
        }
    }

    fn add_design(&mut self, x: &[f64]) {
        let p = self.p;
        for j in 0..p {
            let xj2 = x[j] * x[j];
            for k in 0..p {
                self.xx[j * p + k].add(x[j] * x[k]);
                self.x2x[j * p + k].add(xj2 * x[k]);
            }
        }
    }

    fn add_outcome(&mut self, x: &[f64], y: f64) {
        for ((xy, x2y), &xj) in self.xy.iter_mut().zip(&mut self.x2y).zip(x) {
            xy.add(xj * y);
            x2y.add(xj * xj * y);
        }
        self.yy.add(y * y);
    }

    fn mean(sums: &[CompensatedSum], count: usize) -> Vec<f64> {
        sums.iter().map(|s| s.value() / count as f64).collect()
    }
}

impl EnvStats {
    fn complete(data: &crate::data::EnvironmentData) -> Self {
        let p = data.p();
        let mut acc = Accumulator::new(p);
        for (_, x, y) in data.labeled() {
            acc.add_design(x);
            acc.add_outcome(x, y);
            acc.count += 1;
        }
        let n = acc.count;
        Self {
            xx: DMatrix::from_row_slice(p, p, &Accumulator::mean(&acc.xx, n)),
            x2x: DMatrix::from_row_slice(p, p, &Accumulator::mean(&acc.x2x, n)),
            xy: DVector::from_vec(Accumulator::mean(&acc.xy, n)),
            x2y: DVector::from_vec(Accumulator::mean(&acc.x2y, n)),
            yy: acc.yy.value() / n as f64,
        }
    }

    fn adjusted(data: &crate::data::EnvironmentData, h: &[f64]) -> Self {
        let p = data.p();
        let labeled = Self::complete(data);

        let mut all = Accumulator::new(p);
        for (x, &hi) in data.rows().zip(h) {
            all.add_design(x);
            all.add_outcome(x, hi);
            all.count += 1;
        }
        let mut lab_h = Accumulator::new(p);
        for (i, x, _) in data.labeled() {
            lab_h.add_outcome(x, h[i]);
            lab_h.count += 1;
        }
        let big_n = all.count;
        let n = lab_h.count;
        let combine =
            |lab: &DVector<f64>, all_sums: &[CompensatedSum], lab_sums: &[CompensatedSum]| {
                let all_mean = Accumulator::mean(all_sums, big_n);
                let lab_mean = Accumulator::mean(lab_sums, n);
                DVector::from_iterator(p, (0..p).map(|j| lab[j] + (all_mean[j] - lab_mean[j])))
            };
        Self {
            xx: DMatrix::from_row_slice(p, p, &Accumulator::mean(&all.xx, big_n)),
            x2x: DMatrix::from_row_slice(p, p, &Accumulator::mean(&all.x2x, big_n)),
            xy: combine(&labeled.xy, &all.xy, &lab_h.xy),
            x2y: combine(&labeled.x2y, &all.x2y, &lab_h.x2y),
            yy: labeled.yy + (all.yy.value() / big_n as f64 - lab_h.yy.value() / n as f64),
        }
    }
}

/// Per-environment sufficient statistics of a dataset for one objective mode.
#[derive(Debug, Clone)]
pub struct MomentStats {
    p: usize,
    weights: Vec<f64>,
    envs: Vec<EnvStats>,
}

impl MomentStats {
    pub fn new(
        data: &MultiEnvDataset,
        imputations: Option<&Imputations>,
        mode: ObjectiveMode,
    ) -> Result<Self> {
        let envs = match mode {
            ObjectiveMode::Complete => data.environments().iter().map(EnvStats::complete).collect(),
            ObjectiveMode::Adjusted => {
                let imp = imputations.ok_or_else(|| {
                    Error::MissingImputation("adjusted objective needs predictions".into())
                })?;
                imp.check_against(data)?;
                data.environments()
                    .iter()
                    .enumerate()
                    .map(|(e, env)| EnvStats::adjusted(env, imp.env(e)))
                    .collect()
            }
        };
        Ok(Self {
            p: data.p(),
            weights: data.weights().to_vec(),
            envs,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Objective restricted to `support` as `½βᵀHβ − gᵀβ + c`.
    pub fn quadratic(
        &self,
        support: &Support,
        gamma: f64,
        variant: PenaltyVariant,
    ) -> QuadraticForm {
        let idx = support.indices();
        let s = idx.len();
        let mut hessian = DMatrix::zeros(s, s);
        let mut linear = DVector::zeros(s);
        let mut constant = 0.0;
        let enhanced = variant == PenaltyVariant::Enhanced;
        for (env, &w) in self.envs.iter().zip(&self.weights) {
            let b = env.xx.select_rows(idx).select_columns(idx);
            let a = DVector::from_iterator(s, idx.iter().map(|&j| env.xy[j]));
            let mut h = &b + gamma * b.tr_mul(&b);
            let mut g = &a + gamma * b.tr_mul(&a);
            let mut c = env.yy + gamma * a.dot(&a);
            if enhanced {
                let b2 = env.x2x.select_rows(idx).select_columns(idx);
                let a2 = DVector::from_iterator(s, idx.iter().map(|&j| env.x2y[j]));
                h += gamma * b2.tr_mul(&b2);
                g += gamma * b2.tr_mul(&a2);
                c += gamma * a2.dot(&a2);
            }
            hessian += 2.0 * w * h;
            linear += 2.0 * w * g;
            constant += w * c;
        }
        // Symmetrize away rounding asymmetry from the products above.
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        QuadraticForm {
            hessian,
            linear,
            constant,
            support: support.clone(),
        }
    }
}

/// `½βᵀHβ − gᵀβ + c` over the coordinates of `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub support: Support,
}

impl QuadraticForm {
    pub fn value(&self, beta_s: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta_s);
        0.5 * b.dot(&(&self.hessian * &b)) - self.linear.dot(&b) + self.constant
    }

    /// `‖Hβ − g‖∞`.
    pub fn gradient_norm(&self, beta_s: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta_s);
        (&self.hessian * b - &self.linear).amax()
    }
}

/// Builds the restricted quadratic straight from a dataset.
pub fn assemble_quadratic(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    support: &Support,
    gamma: f64,
    mode: ObjectiveMode,
    variant: PenaltyVariant,
) -> Result<QuadraticForm> {
    if support.indices().iter().any(|&j| j >= data.p()) {
        return Err(Error::DimensionMismatch(format!(
            "support {support} exceeds p = {}",
            data.p()
        )));
    }
    Ok(MomentStats::new(data, imputations, mode)?.quadratic(support, gamma, variant))
}

fn cholesky_solve(h: &DMatrix<f64>, g: &DVector<f64>, strict: bool) -> Option<DVector<f64>> {
    let chol = Cholesky::new(h.clone())?;
    if strict {
        let diag = chol.l_dirty().diagonal();
        let max = diag.max();
        let min = diag.min();
        if min.is_nan() || min <= 0.0 || (min * min) / (max * max) < PIVOT_RATIO_FLOOR {
            return None;
        }
    }
    let x = chol.solve(g);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves `Hβ = g`, retrying once with `H + jitter·I` if the plain solve fails.
///
/// Returns the restricted coefficients and the objective value at them.
pub fn solve_support(qf: &QuadraticForm, jitter: f64) -> Result<(Vec<f64>, f64)> {
    let s = qf.support.len();
    if s == 0 {
        return Ok((Vec::new(), qf.constant));
    }
    let beta = cholesky_solve(&qf.hessian, &qf.linear, true)
        .or_else(|| {
            (jitter > 0.0).then(|| {
                let jittered = &qf.hessian + DMatrix::identity(s, s) * jitter;
                cholesky_solve(&jittered, &qf.linear, false)
            })?
        })
        .ok_or_else(|| Error::SingularSystem(qf.support.to_string()))?;
    let beta: Vec<f64> = beta.iter().copied().collect();
    let value = qf.value(&beta);
    Ok((beta, value))
}

/// Which supports an exhaustive search visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSupports {
    #[default]
    All,
    Explicit(Vec<Support>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub gamma: f64,
    pub variant: PenaltyVariant,
    pub max_support_dim: usize,
    /// Relative ridge factor; the applied jitter is this times `trace(H)/|S|`.
    pub ridge_jitter: f64,
    pub candidate_supports: CandidateSupports,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            variant: PenaltyVariant::Basic,
            max_support_dim: 20,
            ridge_jitter: 1e-10,
            candidate_supports: CandidateSupports::All,
        }
    }
}

impl SearchConfig {
    pub fn with_gamma(gamma: f64, variant: PenaltyVariant) -> Self {
        Self {
            gamma,
            variant,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !(1..=30).contains(&self.max_support_dim) {
            return Err(Error::Config(format!(
                "max_support_dim must be in 1..=30, got {}",
                self.max_support_dim
            )));
        }
        if self.ridge_jitter.is_nan() || self.ridge_jitter < 0.0 {
            return Err(Error::Config(format!(
                "ridge_jitter must be nonnegative, got {}",
                self.ridge_jitter
            )));
        }
        Ok(())
    }
}

/// Minimizer found by [`search`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub support: Support,
    /// Full-length coefficients, zero off the support.
    pub beta: Vec<f64>,
    /// Objective value from the quadratic form.
    pub value: f64,
}

fn evaluate(stats: &MomentStats, support: Support, config: &SearchConfig) -> Result<Solution> {
    let qf = stats.quadratic(&support, config.gamma, config.variant);
    let s = support.len().max(1);
    let jitter = config.ridge_jitter * qf.hessian.trace() / s as f64;
    let (beta_s, value) = solve_support(&qf, jitter)?;
    let beta = support.embed(&beta_s, stats.p());
    Ok(Solution {
        support,
        beta,
        value,
    })
}

/// Picks the minimum value; among values within [`TIE_TOLERANCE`] of it the
/// smallest support wins, then the lexicographically smallest.
fn select(candidates: Vec<Solution>) -> Solution {
    let best = candidates
        .iter()
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|c| c.value <= best + TIE_TOLERANCE)
        .min_by(|a, b| {
            a.support
                .len()
                .cmp(&b.support.len())
                .then_with(|| a.support.cmp(&b.support))
        })
        .expect("candidate set always contains the empty support")
}

/// Exhaustive search over supports using precomputed statistics.
pub fn search_stats(stats: &MomentStats, config: &SearchConfig) -> Result<Solution> {
    config.check()?;
    let p = stats.p();
    let supports: Vec<Support> = match &config.candidate_supports {
        CandidateSupports::All => {
            if p > config.max_support_dim {
                return Err(Error::TooManyCovariates {
                    p,
                    max: config.max_support_dim,
                });
            }
            (0..1u64 << p).map(Support::from_mask).collect()
        }
        CandidateSupports::Explicit(list) => {
            if let Some(bad) = list.iter().find(|s| s.indices().iter().any(|&j| j >= p)) {
                return Err(Error::DimensionMismatch(format!(
                    "candidate support {bad} exceeds p = {p}"
                )));
            }
            let mut all = vec![Support::empty()];
            all.extend(list.iter().filter(|s| !s.is_empty()).cloned());
            all
        }
    };
    let candidates = supports
        .into_par_iter()
        .map(|s| evaluate(stats, s, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(select(candidates))
}

/// Minimizes the objective over all candidate supports.
pub fn search(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    config: &SearchConfig,
    mode: ObjectiveMode,
) -> Result<Solution> {
    let stats = MomentStats::new(data, imputations, mode)?;
    search_stats(&stats, config)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::EnvironmentData;
    use crate::objectives::objective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_env(rows: &[Vec<f64>], ys: &[f64]) -> MultiEnvDataset {
        let env =
            EnvironmentData::from_rows("e", rows, ys.iter().map(|&y| Some(y)).collect()).unwrap();
        MultiEnvDataset::new(vec![env]).unwrap()
    }

    pub(crate) fn random_instance(seed: u64, p: usize) -> (MultiEnvDataset, Imputations) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut envs = Vec::new();
        let mut preds = Vec::new();
        for e in 0..2 {
            let n_rows = rng.random_range(8..30);
            let rows: Vec<Vec<f64>> = (0..n_rows)
                .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let ys = rows
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let y = x.iter().sum::<f64>() * 0.5 + rng.random_range(-1.0..1.0);
                    (i < 2 || rng.random_bool(0.6)).then_some(y)
                })
                .collect();
            preds.push(
                rows.iter()
                    .map(|x| x[0] + rng.random_range(-0.5..0.5))
                    .collect(),
            );
            envs.push(EnvironmentData::from_rows(format!("e{e}"), &rows, ys).unwrap());
        }
        (MultiEnvDataset::new(envs).unwrap(), Imputations::new(preds))
    }

    #[test]
    fn hand_quadratic() {
        let ds = one_env(&[vec![1.0], vec![2.0]], &[2.0, 4.0]);
        let s = Support::full(1);
        let qf = assemble_quadratic(
            &ds,
            None,
            &s,
            0.0,
            ObjectiveMode::Complete,
            PenaltyVariant::Basic,
        )
        .unwrap();
        assert_eq!(qf.hessian[(0, 0)], 5.0);
        assert_eq!(qf.linear[0], 10.0);
        assert_eq!(qf.constant, 10.0);
        let (beta, value) = solve_support(&qf, 0.0).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-14);
        assert!(value.abs() < 1e-12);
    }

    #[test]
    fn zero_linear_term_gives_origin() {
        let qf = QuadraticForm {
            hessian: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            linear: DVector::zeros(2),
            constant: 3.5,
            support: Support::full(2),
        };
        let (beta, value) = solve_support(&qf, 0.0).unwrap();
        assert_eq!(beta, vec![0.0, 0.0]);
        assert_eq!(value, 3.5);
    }

    #[test]
    fn quadratic_matches_objective_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for inst in 0..10 {
            let (ds, imp) = random_instance(100 + inst, 4);
            for _ in 0..10 {
                let mask = rng.random_range(1..16u64);
                let s = Support::from_mask(mask);
                let gamma = rng.random_range(0.0..10.0);
                for (mode, variant) in [
                    (ObjectiveMode::Complete, PenaltyVariant::Basic),
                    (ObjectiveMode::Adjusted, PenaltyVariant::Basic),
                    (ObjectiveMode::Complete, PenaltyVariant::Enhanced),
                    (ObjectiveMode::Adjusted, PenaltyVariant::Enhanced),
                ] {
                    let qf = assemble_quadratic(&ds, Some(&imp), &s, gamma, mode, variant).unwrap();
                    let beta_s: Vec<f64> =
                        (0..s.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let beta = s.embed(&beta_s, 4);
                    let direct = objective(&ds, &beta, &s, gamma, mode, Some(&imp), variant)
                        .unwrap()
                        .total;
                    let quad = qf.value(&beta_s);
                    assert!(
                        (direct - quad).abs() <= 1e-10 * direct.abs().max(1.0),
                        "{direct} vs {quad}"
                    );
                }
            }
        }
    }

    #[test]
    fn collinear_columns_use_jitter_and_match_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                vec![a, a, b]
            })
            .collect();
        let ys: Vec<f64> = rows.iter().map(|x| 2.0 * x[0] - x[2]).collect();
        let ds = one_env(&rows, &ys);
        let s = Support::full(3);
        let qf = assemble_quadratic(
            &ds,
            None,
            &s,
            0.0,
            ObjectiveMode::Complete,
            PenaltyVariant::Basic,
        )
        .unwrap();
        let jitter = 1e-10 * qf.hessian.trace() / 3.0;
        let (beta, value) = solve_support(&qf, jitter).unwrap();

        let pinv = qf.hessian.clone().pseudo_inverse(1e-12).unwrap();
        let oracle: Vec<f64> = (pinv * &qf.linear).iter().copied().collect();
        let oracle_value = qf.value(&oracle);
        assert!(
            (value - oracle_value).abs() <= 1e-6,
            "{value} vs {oracle_value}"
        );
        assert!((beta[0] + beta[1] - 2.0).abs() < 1e-4, "{beta:?}");
        assert!(
            (beta[0] - beta[1]).abs() < 1e-4,
            "ridge limit splits evenly: {beta:?}"
        );
    }

    #[test]
    fn all_zero_design_is_singular() {
        let ds = one_env(&[vec![0.0], vec![0.0]], &[1.0, 2.0]);
        let qf = assemble_quadratic(
            &ds,
            None,
            &Support::full(1),
            0.0,
            ObjectiveMode::Complete,
            PenaltyVariant::Basic,
        )
        .unwrap();
        assert!(matches!(
            solve_support(&qf, 0.0),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn ordinary_least_squares_at_zero_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|x| x[0] - 2.0 * x[1] + 0.5 * x[2] + rng.random_range(-0.3..0.3))
            .collect();
        let ds = one_env(&rows, &ys);
        let sol = search(&ds, None, &SearchConfig::default(), ObjectiveMode::Complete).unwrap();
        let x = DMatrix::from_fn(50, 3, |i, j| rows[i][j]);
        let y = DVector::from_vec(ys.clone());
        let ols = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * y));
        assert_eq!(sol.support, Support::full(3));
        for j in 0..3 {
            assert!((sol.beta[j] - ols[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn ties_prefer_smaller_support() {
        // x2 is identically zero on labeled rows, so adding it never changes
        // the objective; it is also singular alone, so give it jitter to spare.
        let rows = vec![vec![1.0, 1e-300], vec![2.0, 0.0], vec![-1.0, 0.0]];
        let ds = one_env(&rows, &[1.0, 2.0, -1.0]);
        let config = SearchConfig {
            candidate_supports: CandidateSupports::Explicit(vec![
                Support::full(2),
                Support::from_one_based(&[1], 2).unwrap(),
            ]),
            ..SearchConfig::default()
        };
        let sol = search(&ds, None, &config, ObjectiveMode::Complete).unwrap();
        assert_eq!(sol.support, Support::from_one_based(&[1], 2).unwrap());

        let a = Solution {
            support: Support::from_one_based(&[2, 3], 4).unwrap(),
            beta: vec![],
            value: 1.0,
        };
        let b = Solution {
            support: Support::from_one_based(&[1, 4], 4).unwrap(),
            beta: vec![],
            value: 1.0 + 5e-13,
        };
        let c = Solution {
            support: Support::from_one_based(&[1, 2, 3], 4).unwrap(),
            beta: vec![],
            value: 1.0 - 5e-13,
        };
        assert_eq!(select(vec![a, b.clone(), c]).support, b.support);
    }

    #[test]
    fn too_many_covariates_for_exhaustive_search() {
        let (ds, _) = random_instance(1, 4);
        let config = SearchConfig {
            max_support_dim: 3,
            ..SearchConfig::default()
        };
        assert!(matches!(
            search(&ds, None, &config, ObjectiveMode::Complete),
            Err(Error::TooManyCovariates { p: 4, max: 3 })
        ));
    }

    #[test]
    fn stationarity_and_determinism() {
        for seed in 0..5 {
            let (ds, imp) = random_instance(seed, 4);
            let config = SearchConfig::with_gamma(5.0, PenaltyVariant::Enhanced);
            let sol = search(&ds, Some(&imp), &config, ObjectiveMode::Adjusted).unwrap();
            let stats = MomentStats::new(&ds, Some(&imp), ObjectiveMode::Adjusted).unwrap();
            let qf = stats.quadratic(&sol.support, 5.0, PenaltyVariant::Enhanced);
            let beta_s: Vec<f64> = sol.support.indices().iter().map(|&j| sol.beta[j]).collect();
            // Finite-difference gradient of the restricted objective.
            let step = 1e-5;
            for k in 0..beta_s.len() {
                let mut up = beta_s.clone();
                up[k] += step;
                let mut down = beta_s.clone();
                down[k] -= step;
                let fd = (qf.value(&up) - qf.value(&down)) / (2.0 * step);
                assert!(
                    fd.abs() <= 1e-5 * (1.0 + sol.value.abs()),
                    "fd gradient {fd}"
                );
            }
            assert!(qf.gradient_norm(&beta_s) <= 1e-6 * (1.0 + qf.linear.amax()));
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap();
            let single = pool
                .install(|| search(&ds, Some(&imp), &config, ObjectiveMode::Adjusted))
                .unwrap();
            assert_eq!(single, sol);
        }
    }
}
