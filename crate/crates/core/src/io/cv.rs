//! Leave-one-month-out cross-validation with per-day `γ` selection.
//!
//! An imputer is trained once on a separate history table. Outcomes of the
//! evaluation table are then masked at a fixed rate, and each calendar month
//! in turn is held out: every method is fitted on the remaining months at
//! every `γ`, the held-out month is predicted row by row, and squared errors
//! are averaged per calendar day. Daily errors are finally averaged per day
//! of the month across the folds that contain that day, and each day keeps
//! the `γ` with the smallest average.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::center::{center, Centering};
use super::table::{Record, Table};
use crate::data::{Imputations, MultiEnvDataset};
use crate::error::{Error, Result};
use crate::estimators::{Method, PreparedFit};
use crate::imputation::{build_strategy, EnvImputer, ImputerSpec, TrainingSet};
use crate::objectives::PenaltyVariant;
use crate::optimizer::SearchConfig;
use crate::rng::{self, tag};
use crate::simulation::masked_count;

/// How rows of a training fold are split into environments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by", content = "name")]
pub enum EnvSplit {
    /// By the value of a column; `env` refers to the mandatory env column.
    Column(String),
    /// By calendar month number, `01` to `12`.
    Month,
}

impl EnvSplit {
    pub fn describe(&self) -> String {
        match self {
            EnvSplit::Column(c) => format!("column `{c}`"),
            EnvSplit::Month => "calendar month".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub methods: Vec<Method>,
    pub gammas: Vec<f64>,
    pub variant: PenaltyVariant,
    /// Fraction of evaluation outcomes hidden, per (month, environment) group.
    pub mask_ratio: f64,
    pub env_split: EnvSplit,
    pub imputer: ImputerSpec,
    /// Center covariates and outcomes per fit, predicting `ȳ + β̂ᵀ(x − x̄)`.
    pub center: bool,
    pub seed: u64,
    pub max_support_dim: usize,
    pub ridge_jitter: f64,
}

impl CvConfig {
    pub fn new(imputer: ImputerSpec) -> Self {
        let search = SearchConfig::default();
        Self {
            methods: Method::ALL.to_vec(),
            gammas: vec![1.0, 5.0, 10.0, 20.0],
            variant: PenaltyVariant::Enhanced,
            mask_ratio: 0.85,
            env_split: EnvSplit::Column("env".into()),
            imputer,
            center: false,
            seed: 0,
            max_support_dim: search.max_support_dim,
            ridge_jitter: search.ridge_jitter,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.gammas.is_empty() {
            return Err(Error::Config(
                "cv needs at least one method and one gamma".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!(
                "mask_ratio must be in [0, 1), got {}",
                self.mask_ratio
            )));
        }
        for &g in &self.gammas {
            self.search(g).check()?;
        }
        Ok(())
    }

    fn search(&self, gamma: f64) -> SearchConfig {
        SearchConfig {
            gamma,
            variant: self.variant,
            max_support_dim: self.max_support_dim,
            ridge_jitter: self.ridge_jitter,
            ..SearchConfig::default()
        }
    }
}

/// Daily errors of one method at one `γ` within one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub method: Method,
    pub gamma: f64,
    pub support: crate::data::Support,
    pub beta: Vec<f64>,
    /// `(day of month, mean squared error over that day's rows)`.
    pub daily_mse: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    /// Held-out month as `YYYY-MM`.
    pub month: String,
    pub n_train: usize,
    pub n_test: usize,
    pub fits: Vec<FoldFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyEntry {
    pub day: u32,
    /// Folds containing this day of the month.
    pub folds: usize,
    pub chosen_gamma: f64,
    pub mse: f64,
    /// Mean daily MSE at each grid `γ`, in grid order.
    pub mse_by_gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCv {
    pub method: Method,
    pub days: Vec<DailyEntry>,
}

impl MethodCv {
    /// Daily MSEs at the chosen `γ`, sorted ascending, paired with
    /// normalized ranks `(i + 1) / k`.
    pub fn quantile_curve(&self) -> Vec<(f64, f64)> {
        let mut mse: Vec<f64> = self.days.iter().map(|d| d.mse).collect();
        mse.sort_by(f64::total_cmp);
        let k = mse.len() as f64;
        mse.into_iter()
            .enumerate()
            .map(|(i, v)| ((i + 1) as f64 / k, v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub environments: String,
    pub config: CvConfig,
    pub months: Vec<String>,
    pub methods: Vec<MethodCv>,
    pub folds: Vec<FoldTrace>,
}

/// Per-day argmin over `γ` of a `γ × day` table; ties go to the smaller `γ`.
/// Days where every entry is `None` get `None`.
pub fn select_gamma(gammas: &[f64], table: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    let days = table.first().map_or(0, Vec::len);
    (0..days)
        .map(|d| {
            let mut best: Option<(f64, f64)> = None;
            for (g, row) in gammas.iter().zip(table) {
                if let Some(v) = row[d] {
                    let better = match best {
                        None => true,
                        Some((bg, bv)) => v < bv || (v == bv && *g < bg),
                    };
                    if better {
                        best = Some((*g, v));
                    }
                }
            }
            best.map(|(g, _)| g)
        })
        .collect()
}

struct Frame<'a> {
    table: &'a Table,
    dates: Vec<NaiveDate>,
    truth: Vec<f64>,
    keys: Vec<String>,
}

/// Environment key of a record.
type KeyFn<'a> = Box<dyn Fn(&Record) -> Result<String> + Sync + 'a>;

fn key_fn<'a>(table: &'a Table, split: &EnvSplit) -> Result<KeyFn<'a>> {
    Ok(match split {
        EnvSplit::Column(c) if c == "env" => Box::new(|r: &Record| Ok(r.env.clone())),
        EnvSplit::Column(c) => {
            let col = table.column(c)?;
            Box::new(move |r: &Record| Ok(r.extra[col].clone()))
        }
        EnvSplit::Month => Box::new(|r: &Record| {
            r.date
                .map(|d| format!("{:02}", d.month()))
                .ok_or_else(|| Error::Schema("row without `date`".into()))
        }),
    })
}

fn month_of(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}

fn train_imputers(
    history: &Table,
    config: &CvConfig,
) -> Result<(Vec<EnvImputer>, HashMap<String, usize>)> {
    let key = key_fn(history, &config.env_split)?;
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &history.records {
        if let Some(y) = r.y {
            let g = groups.entry(key(r)?).or_default();
            g.0.extend_from_slice(&r.x);
            g.1.push(y);
        }
    }
    let mut index = HashMap::new();
    let mut sets = Vec::new();
    for (i, (k, (x, y))) in groups.into_iter().enumerate() {
        index.insert(k, i);
        sets.push(TrainingSet::new(history.p, x, y)?);
    }
    Ok((build_strategy(&config.imputer, &sets)?, index))
}

fn predict_linear(beta: &[f64], centering: Option<&Centering>, x: &[f64]) -> f64 {
    match centering {
        None => x.iter().zip(beta).map(|(a, b)| a * b).sum(),
        Some(c) => c.predict(beta, x),
    }
}

/// Runs the harness on `eval`, with the imputer trained on `history`.
pub fn monthly_cv(eval: &Table, history: &Table, config: &CvConfig) -> Result<CvResult> {
    config.validate()?;
    if history.p != eval.p {
        return Err(Error::DimensionMismatch(format!(
            "history has p = {}, evaluation data has p = {}",
            history.p, eval.p
        )));
    }
    let key = key_fn(eval, &config.env_split)?;
    let mut dates = Vec::with_capacity(eval.records.len());
    let mut truth = Vec::with_capacity(eval.records.len());
    let mut keys = Vec::with_capacity(eval.records.len());
    for (i, r) in eval.records.iter().enumerate() {
        dates.push(
            r.date
                .ok_or_else(|| Error::Schema(format!("evaluation row {} has no `date`", i + 1)))?,
        );
        truth.push(
            r.y.ok_or_else(|| Error::Schema(format!("evaluation row {} has no outcome", i + 1)))?,
        );
        keys.push(key(r)?);
    }
    let frame = Frame {
        table: eval,
        dates,
        truth,
        keys,
    };
    let months: Vec<String> = frame
        .dates
        .iter()
        .map(|&d| month_of(d))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if months.len() < 2 {
        return Err(Error::InsufficientMonths(months.len()));
    }

    let (imputers, imputer_index) = train_imputers(history, config)?;
    let predictions = frame
        .table
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let e = *imputer_index.get(&frame.keys[i]).ok_or_else(|| {
                Error::Config(format!(
                    "history has no labeled rows for environment `{}`",
                    frame.keys[i]
                ))
            })?;
            Ok(imputers[e].predict_row(&r.x, i))
        })
        .collect::<Result<Vec<f64>>>()?;

    let masked = mask_rows(&frame, config)?;
    let folds = months
        .par_iter()
        .map(|month| run_fold(&frame, &predictions, &masked, month, config))
        .collect::<Result<Vec<_>>>()?;

    let methods = config
        .methods
        .iter()
        .map(|&method| aggregate(method, &config.gammas, &folds))
        .collect();
    Ok(CvResult {
        environments: config.env_split.describe(),
        config: config.clone(),
        months,
        methods,
        folds,
    })
}

fn mask_rows(frame: &Frame, config: &CvConfig) -> Result<Vec<bool>> {
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, d) in frame.dates.iter().enumerate() {
        groups
            .entry((month_of(*d), frame.keys[i].clone()))
            .or_default()
            .push(i);
    }
    let mut masked = vec![false; frame.dates.len()];
    for (g, (_, rows)) in groups.into_iter().enumerate() {
        let n = rows.len();
        let k = masked_count(n, config.mask_ratio);
        if k >= n {
            return Err(Error::AllMissing {
                ratio: config.mask_ratio,
                n,
            });
        }
        let mut r = rng::stream(config.seed, &[tag("cv-mask"), g as u64]);
        for pick in rand::seq::index::sample(&mut r, n, k) {
            masked[rows[pick]] = true;
        }
    }
    Ok(masked)
}

/// Builds the dataset and aligned predictions for `rows`, grouped by key in
/// order of first appearance.
fn fold_dataset(
    frame: &Frame,
    rows: &[usize],
    predictions: &[f64],
    hide: Option<&[bool]>,
) -> Result<(MultiEnvDataset, Imputations)> {
    let data = frame.table.group_rows(
        rows,
        |i, _| frame.keys[i].clone(),
        |i, _| match hide {
            Some(h) if h[i] => None,
            _ => Some(frame.truth[i]),
        },
    )?;
    let mut order: Vec<&str> = Vec::new();
    let mut preds: HashMap<&str, Vec<f64>> = HashMap::new();
    for &i in rows {
        let k = frame.keys[i].as_str();
        preds
            .entry(k)
            .or_insert_with(|| {
                order.push(k);
                Vec::new()
            })
            .push(predictions[i]);
    }
    let imputations = Imputations::new(
        order
            .into_iter()
            .map(|k| preds.remove(k).unwrap_or_default())
            .collect(),
    );
    Ok((data, imputations))
}

fn run_fold(
    frame: &Frame,
    predictions: &[f64],
    masked: &[bool],
    month: &str,
    config: &CvConfig,
) -> Result<FoldTrace> {
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..frame.dates.len()).partition(|&i| month_of(frame.dates[i]) == month);
    let (masked_data, imputations) = fold_dataset(frame, &train, predictions, Some(masked))?;
    let (full_data, _) = fold_dataset(frame, &train, predictions, None)?;
    let mut fits = Vec::with_capacity(config.methods.len() * config.gammas.len());
    for &method in &config.methods {
        let base = if method == Method::Oracle {
            &full_data
        } else {
            &masked_data
        };
        let (data, imps, centering) = if config.center {
            let (d, i, c) = center(base, Some(&imputations))?;
            (d, i, Some(c))
        } else {
            (base.clone(), Some(imputations.clone()), None)
        };
        let prepared = PreparedFit::new(method, &data, imps.as_ref())?;
        for &gamma in &config.gammas {
            let fit = prepared.fit(&config.search(gamma))?;
            let mut by_day: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
            for &i in &test {
                let yhat = predict_linear(&fit.beta, centering.as_ref(), &frame.table.records[i].x);
                let entry = by_day.entry(frame.dates[i].day()).or_insert((0.0, 0));
                entry.0 += (yhat - frame.truth[i]).powi(2);
                entry.1 += 1;
            }
            fits.push(FoldFit {
                method,
                gamma,
                support: fit.support,
                beta: fit.beta,
                daily_mse: by_day
                    .into_iter()
                    .map(|(d, (s, c))| (d, s / c as f64))
                    .collect(),
            });
        }
    }
    Ok(FoldTrace {
        month: month.to_owned(),
        n_train: train.len(),
        n_test: test.len(),
        fits,
    })
}

fn aggregate(method: Method, gammas: &[f64], folds: &[FoldTrace]) -> MethodCv {
    let mut sums = vec![[0.0f64; 32]; gammas.len()];
    let mut counts = [0usize; 32];
    for fold in folds {
        for (g, &gamma) in gammas.iter().enumerate() {
            let fit = fold
                .fits
                .iter()
                .find(|f| f.method == method && f.gamma == gamma)
                .expect("every fold fits every method at every gamma");
            for &(day, mse) in &fit.daily_mse {
                sums[g][day as usize] += mse;
                if g == 0 {
                    counts[day as usize] += 1;
                }
            }
        }
    }
    let table: Vec<Vec<Option<f64>>> = sums
        .iter()
        .map(|row| {
            (1..=31)
                .map(|d| (counts[d] > 0).then(|| row[d] / counts[d] as f64))
                .collect()
        })
        .collect();
    let chosen = select_gamma(gammas, &table);
    let days = (1..=31u32)
        .filter(|&d| counts[d as usize] > 0)
        .map(|d| {
            let col = d as usize - 1;
            let mse_by_gamma: Vec<f64> = table
                .iter()
                .map(|row| row[col].expect("day present"))
                .collect();
            let gamma = chosen[col].expect("day present");
            let g = gammas
                .iter()
                .position(|&x| x == gamma)
                .expect("chosen from grid");
            DailyEntry {
                day: d,
                folds: counts[d as usize],
                chosen_gamma: gamma,
                mse: mse_by_gamma[g],
                mse_by_gamma,
            }
        })
        .collect();
    MethodCv { method, days }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_gamma_rules() {
        assert_eq!(
            select_gamma(&[1.0], &[vec![Some(3.0), Some(0.5)]]),
            vec![Some(1.0); 2]
        );
        assert_eq!(
            select_gamma(&[1.0, 10.0], &[vec![Some(4.0)], vec![Some(2.0)]]),
            vec![Some(10.0)]
        );
        assert_eq!(
            select_gamma(&[10.0, 1.0], &[vec![Some(2.0)], vec![Some(2.0)]]),
            vec![Some(1.0)]
        );
        assert_eq!(select_gamma(&[1.0], &[vec![None]]), vec![None]);
    }

    #[test]
    fn quantile_curve_is_monotone() {
        let m = MethodCv {
            method: Method::Iaei,
            days: [3.0, 1.0, 2.0]
                .iter()
                .enumerate()
                .map(|(i, &mse)| DailyEntry {
                    day: i as u32 + 1,
                    folds: 1,
                    chosen_gamma: 1.0,
                    mse,
                    mse_by_gamma: vec![mse],
                })
                .collect(),
        };
        let curve = m.quantile_curve();
        assert_eq!(curve.last().unwrap().0, 1.0);
        assert!(curve
            .windows(2)
            .all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
    }
}
