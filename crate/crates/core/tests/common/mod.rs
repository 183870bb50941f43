//! Shared fixtures and an independent brute-force minimizer.

#![allow(dead_code)]

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iaei::estimators::Method;
use iaei::objectives::objective;
use iaei::{EnvironmentData, Imputations, MultiEnvDataset, ObjectiveMode, PenaltyVariant, Support};

/// A random two-environment instance: the masked data, the fully labeled
/// data and predictions for every row.
pub struct Instance {
    pub data: MultiEnvDataset,
    pub full: MultiEnvDataset,
    pub imputations: Imputations,
}

pub fn random_instance(seed: u64, p: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = Vec::new();
    let mut full = Vec::new();
    let mut preds = Vec::new();
    for e in 0..2 {
        let n = rng.random_range(12..40);
        let shift: f64 = rng.random_range(-1.0..1.0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..p)
                    .map(|j| rng.random_range(-2.0..2.0) + shift * j as f64 * 0.3)
                    .collect()
            })
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * (j as f64 - 1.0) * 0.4)
                    .sum::<f64>()
                    + rng.random_range(-1.0..1.0)
            })
            .collect();
        let labeled: Vec<Option<f64>> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| (i < 3 || rng.random_bool(0.5)).then_some(y))
            .collect();
        preds.push(
            rows.iter()
                .zip(&ys)
                .map(|(x, y)| 0.7 * y + 0.2 * x[0] + rng.random_range(-0.3..0.3))
                .collect(),
        );
        let id = format!("env{e}");
        masked.push(EnvironmentData::from_rows(id.clone(), &rows, labeled).unwrap());
        full.push(
            EnvironmentData::from_rows(id, &rows, ys.into_iter().map(Some).collect()).unwrap(),
        );
    }
    Instance {
        data: MultiEnvDataset::new(masked).unwrap(),
        full: MultiEnvDataset::new(full).unwrap(),
        imputations: Imputations::new(preds),
    }
}

/// The dataset, prediction set and mode each method's objective is
/// evaluated on, built directly from the method definitions.
pub fn method_view(
    method: Method,
    inst: &Instance,
) -> (MultiEnvDataset, Option<Imputations>, ObjectiveMode) {
    let envs = inst.data.environments();
    let p = inst.data.p();
    let relabel = |pick: &dyn Fn(usize, usize) -> Option<f64>| {
        MultiEnvDataset::new(
            envs.iter()
                .enumerate()
                .map(|(e, env)| {
                    let rows: Vec<Vec<f64>> = env.rows().map(<[f64]>::to_vec).collect();
                    let ys: Vec<Option<f64>> = (0..env.n_rows()).map(|i| pick(e, i)).collect();
                    let kept: Vec<(Vec<f64>, f64)> = rows
                        .into_iter()
                        .zip(ys)
                        .filter_map(|(x, y)| y.map(|y| (x, y)))
                        .collect();
                    let x: Vec<f64> = kept.iter().flat_map(|(x, _)| x.clone()).collect();
                    let y: Vec<Option<f64>> = kept.iter().map(|(_, y)| Some(*y)).collect();
                    EnvironmentData::from_flat(env.env_id().to_owned(), p, x, y).unwrap()
                })
                .collect(),
        )
        .unwrap()
    };
    let h = &inst.imputations;
    match method {
        Method::Iaei => (inst.data.clone(), Some(h.clone()), ObjectiveMode::Adjusted),
        Method::Oracle => (inst.full.clone(), None, ObjectiveMode::Complete),
        Method::EillsObserve => (
            relabel(&|e, i| envs[e].outcome_opt(i)),
            None,
            ObjectiveMode::Complete,
        ),
        Method::EillsImpute => (
            relabel(&|e, i| Some(h.env(e)[i])),
            None,
            ObjectiveMode::Complete,
        ),
        Method::EillsMix => (
            relabel(&|e, i| Some(envs[e].outcome_opt(i).unwrap_or(h.env(e)[i]))),
            None,
            ObjectiveMode::Complete,
        ),
    }
}

/// Minimum of the objective over every support, each restriction minimized
/// by Newton steps on finite-difference derivatives.
pub fn brute_force_minimum(
    data: &MultiEnvDataset,
    imputations: Option<&Imputations>,
    mode: ObjectiveMode,
    gamma: f64,
    variant: PenaltyVariant,
) -> f64 {
    let p = data.p();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let support = Support::new(idx.clone(), p).unwrap();
        let f = |b: &[f64]| {
            let mut beta = vec![0.0; p];
            for (k, &j) in idx.iter().enumerate() {
                beta[j] = b[k];
            }
            objective(data, &beta, &support, gamma, mode, imputations, variant)
                .unwrap()
                .total
        };
        best = best.min(newton_minimize(&f, idx.len()));
    }
    best
}

fn newton_minimize(f: &dyn Fn(&[f64]) -> f64, k: usize) -> f64 {
    let mut b = vec![0.0; k];
    if k == 0 {
        return f(&b);
    }
    let h = 1e-3;
    let hessian = {
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let at = |si: f64, sj: f64| {
                    let mut x = b.clone();
                    x[i] += si * h;
                    x[j] += sj * h;
                    f(&x)
                };
                m[(i, j)] =
                    (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        (m.clone() + m.transpose()) * 0.5
    };
    let pinv = hessian.pseudo_inverse(1e-12).unwrap();
    let mut value = f(&b);
    for _ in 0..6 {
        let g = DVector::from_iterator(
            k,
            (0..k).map(|i| {
                let mut up = b.clone();
                let mut down = b.clone();
                up[i] += 1e-4;
                down[i] -= 1e-4;
                (f(&up) - f(&down)) / 2e-4
            }),
        );
        let step = &pinv * g;
        let candidate: Vec<f64> = b.iter().zip(step.iter()).map(|(x, s)| x - s).collect();
        let v = f(&candidate);
        if v < value {
            value = v;
            b = candidate;
        } else {
            break;
        }
    }
    value
}

/// Hourly CSV text for `year`: three covariates, two environments `a`/`b`
/// alternating by hour, and `y = 1.5·x1 − 2·x2 + 0.5·x3 + noise_sd·ε`.
pub fn hourly_csv(year: i32, hours: &[u32], noise_sd: f64, seed: u64) -> String {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("env,y,x1,x2,x3,date,hour,season\n");
    let mut day = chrono::NaiveDate::from_ymd_opt(year, 1, 1).unwrap();
    while day.year() == year {
        for (k, &hour) in hours.iter().enumerate() {
            let env = if k % 2 == 0 { "a" } else { "b" };
            let shift = if env == "a" { 0.0 } else { 1.0 };
            let x: Vec<f64> = (0..3)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift * (j as f64 - 1.0)
                })
                .collect();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let y = 1.5 * x[0] - 2.0 * x[1] + 0.5 * x[2] + noise_sd * eps;
            let season = if day.month() <= 6 { "warm" } else { "cold" };
            out.push_str(&format!(
                "{env},{y},{},{},{},{day},{hour},{season}\n",
                x[0], x[1], x[2]
            ));
        }
        day = day.succ_opt().unwrap();
    }
    out
}
