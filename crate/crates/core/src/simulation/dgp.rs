//! Structural equation models 0–3 with two environments and twelve covariates.
//!
//! Every row draws `u_1, …, u_13` i.i.d. standard normal (and one extra
//! `v_14` in environment 2 of Model 3) and propagates the equations in
//! topological order. All models share `y = 3x_1 + 2x_2 − 0.5x_3 + noise` in
//! environment 1, so `S* = {1, 2, 3}` everywhere.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{EnvironmentData, GroundTruth, MultiEnvDataset};
use crate::error::{Error, Result};
use crate::rng;

/// Covariate dimension of every shipped model.
pub const P: usize = 12;

/// Environment identifiers, in order.
pub const ENV_IDS: [&str; 2] = ["1", "2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemModel {
    Model0,
    Model1,
    Model2,
    Model3,
}

impl SemModel {
    pub const ALL: [SemModel; 4] = [Self::Model0, Self::Model1, Self::Model2, Self::Model3];

    pub fn name(self) -> &'static str {
        match self {
            SemModel::Model0 => "model0",
            SemModel::Model1 => "model1",
            SemModel::Model2 => "model2",
            SemModel::Model3 => "model3",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "model",
                name: name.to_owned(),
            })
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

/// `β* = (3, 2, −0.5, 0, …, 0)`.
pub fn beta_star() -> Vec<f64> {
    let mut b = vec![0.0; P];
    b[0] = 3.0;
    b[1] = 2.0;
    b[2] = -0.5;
    b
}

pub fn ground_truth() -> GroundTruth {
    GroundTruth::new(beta_star())
}

/// Source of the exogenous noise terms, drawn in order.
pub trait NoiseSource {
    fn draw(&mut self) -> f64;
}

/// Standard normal draws from a generator.
pub struct Gaussian<R>(pub R);

impl<R: Rng> NoiseSource for Gaussian<R> {
    fn draw(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

/// Every noise term fixed at zero.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn draw(&mut self) -> f64 {
        0.0
    }
}

/// One row `(x_1..x_12, y)` of environment `env` (1 or 2).
pub fn generate_row(model: SemModel, env: usize, noise: &mut impl NoiseSource) -> ([f64; P], f64) {
    assert!(
        env == 1 || env == 2,
        "environment must be 1 or 2, got {env}"
    );
    let mut u = [0.0; 14];
    for slot in u.iter_mut().skip(1) {
        *slot = noise.draw();
    }
    let second = env == 2;
    let extra = if second && model == SemModel::Model3 {
        noise.draw()
    } else {
        0.0
    };

    let x1 = u[1];
    let x4 = if second { u[4] * u[4] - 1.0 } else { u[4] };
    let x2 = x4.sin() + u[2];
    let x3 = x4.cos() + u[3];
    let x5 = (x3 + u[5]).sin();
    let x10 = 2.5 * x1 + 1.5 * x2 + u[10];
    let x12 = u[12];
    let mut y = 3.0 * x1 + 2.0 * x2 - 0.5 * x3 + u[13];
    if second {
        match model {
            SemModel::Model2 => y += x12.sin() + (x12 * x12 - 1.0),
            SemModel::Model3 => {
                let v13 = -0.5 * x12.powi(3) + extra;
                y += 0.5 * x12 + v13;
            }
            SemModel::Model0 | SemModel::Model1 => {}
        }
    }
    let x6 = 0.8 * y * u[6];
    let (x7, x8) = match (model, second) {
        (SemModel::Model0, false) => {
            let x7 = 0.5 * x3 + y + u[7];
            (x7, 0.5 * x7 - y + x10 + u[8])
        }
        (SemModel::Model0, true) => {
            let x7 = 4.0 * x3 + y.tanh() + u[7];
            (x7, 0.5 * x7 - y + x10 + u[8])
        }
        (_, false) => {
            let x7 = 0.5 * (x3 * x3).sin() + 8.0 * y.powi(3) + u[7];
            (x7, (x7 * y + 1.0).abs().ln() + 5.0 * y.sin() + u[8])
        }
        (_, true) => {
            let x7 = x3.tanh() + 4.0 * y.abs().sqrt() + u[7];
            (x7, 0.5 * x7 * x7 + y.powi(3) + y.cos() + u[8])
        }
    };
    let x9 = x7.tanh() + 0.1 * x8.cos() + u[9];
    let x11 = 0.4 * (x7 + x8) * u[11];
    ([x1, x2, x3, x4, x5, x6, x7, x8, x9, x10, x11, x12], y)
}

/// `n` fully labeled rows of environment `env`.
pub fn generate(
    model: SemModel,
    env: usize,
    n: usize,
    noise: &mut impl NoiseSource,
) -> Result<EnvironmentData> {
    if n == 0 {
        return Err(Error::TooFewRows {
            required: 1,
            got: 0,
        });
    }
    let mut x = Vec::with_capacity(n * P);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (row, out) = generate_row(model, env, noise);
        x.extend_from_slice(&row);
        y.push(Some(out));
    }
    EnvironmentData::from_flat(ENV_IDS[env - 1], P, x, y)
}

/// Both environments with `n` rows each; environment `e` draws from the
/// stream `(seed, e)`.
pub fn generate_dataset(model: SemModel, n: usize, seed: u64) -> Result<MultiEnvDataset> {
    let envs = (1..=2)
        .map(|e| generate(model, e, n, &mut Gaussian(rng::stream(seed, &[e as u64]))))
        .collect::<Result<Vec<_>>>()?;
    MultiEnvDataset::new(envs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_noise_model0_env1() {
        let (x, y) = generate_row(SemModel::Model0, 1, &mut ZeroNoise);
        let mut expected = [0.0; P];
        expected[2] = 1.0;
        expected[4] = 1f64.sin();
        expected[7] = 0.5;
        expected[8] = 0.1 * 0.5f64.cos();
        for (a, b) in x.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12, "{x:?}");
        }
        assert!((y + 0.5).abs() <= 1e-12);
    }

    #[test]
    fn models_differ_only_downstream_of_y() {
        let seed = 17;
        let mut a = Gaussian(ChaCha12Rng::seed_from_u64(seed));
        let mut b = Gaussian(ChaCha12Rng::seed_from_u64(seed));
        for _ in 0..50 {
            let (x0, y0) = generate_row(SemModel::Model0, 1, &mut a);
            let (x1, y1) = generate_row(SemModel::Model1, 1, &mut b);
            assert_eq!(y0, y1);
            for j in [0, 1, 2, 3, 4, 5, 9, 11] {
                assert_eq!(x0[j], x1[j], "x{}", j + 1);
            }
            for j in [6, 7] {
                assert_ne!(x0[j], x1[j], "x{}", j + 1);
            }
        }
    }

    #[test]
    fn second_environment_shifts_x4() {
        let (x, y) = generate_row(SemModel::Model0, 2, &mut ZeroNoise);
        assert_eq!(x[3], -1.0);
        assert!((x[1] - (-1f64).sin()).abs() < 1e-15);
        assert!((y - (2.0 * (-1f64).sin() - 0.5 * (-1f64).cos())).abs() < 1e-12);
    }

    #[test]
    fn model3_draws_extra_noise() {
        struct Counter(usize);
        impl NoiseSource for Counter {
            fn draw(&mut self) -> f64 {
                self.0 += 1;
                0.0
            }
        }
        let mut c = Counter(0);
        generate_row(SemModel::Model3, 2, &mut c);
        assert_eq!(c.0, 14);
        let mut c = Counter(0);
        generate_row(SemModel::Model3, 1, &mut c);
        assert_eq!(c.0, 13);
    }

    #[test]
    fn names_round_trip() {
        for m in SemModel::ALL {
            assert_eq!(SemModel::parse(m.name()).unwrap(), m);
        }
        assert_eq!(ground_truth().support_star().one_based(), vec![1, 2, 3]);
    }
}
