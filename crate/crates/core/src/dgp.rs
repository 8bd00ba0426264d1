//! Synthetic randomised experiments `Y = F(X1, X2) + A * G(X1, X2) + eps` with
//! `X1, X2 ~ N(0, 1)`, `A ~ Bernoulli(p_treat)` and `eps ~ N(0, sigma_eps^2)`.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven by
//! a ChaCha8 stream seeded from the config seed.

use crate::dr_engine::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derived_rng, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Baseline outcome surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FKind {
    I,
    II,
    III,
    IV,
}

/// Treatment effect surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GKind {
    I,
    II,
    III,
    IV,
}

fn roman(s: &str) -> Option<usize> {
    match s {
        "I" | "1" => Some(0),
        "II" | "2" => Some(1),
        "III" | "3" => Some(2),
        "IV" | "4" => Some(3),
        _ => None,
    }
}

const ROMAN: [&str; 4] = ["I", "II", "III", "IV"];

impl FromStr for FKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        roman(s)
            .map(|i| [FKind::I, FKind::II, FKind::III, FKind::IV][i])
            .ok_or_else(|| Error::Config(format!("unknown F configuration `{s}` (expected I..IV)")))
    }
}

impl FromStr for GKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        roman(s)
            .map(|i| [GKind::I, GKind::II, GKind::III, GKind::IV][i])
            .ok_or_else(|| Error::Config(format!("unknown G configuration `{s}` (expected I..IV)")))
    }
}

impl fmt::Display for FKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(ROMAN[*self as usize])
    }
}

impl fmt::Display for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(ROMAN[*self as usize])
    }
}

impl FKind {
    pub fn eval(self, x1: f64, x2: f64) -> f64 {
        match self {
            FKind::I => 2.0 * x1 + x2,
            FKind::II => x1 * (x2 + 1.0),
            FKind::III => x1 * x1 + x2 + 1.0,
            FKind::IV => 0.5 * x1 * x2.exp(),
        }
    }
}

impl GKind {
    pub fn eval(self, x1: f64, x2: f64) -> f64 {
        match self {
            GKind::I => 0.0,
            GKind::II => (x1 + 2.0 * x2) / 10.0,
            GKind::III => (x1 * x1 + x2 * x2) / 110.0,
            GKind::IV => (x1 + 2.0 * x2 * x2) / 105.0,
        }
    }

    /// `E[G(X1, X2)]` for independent standard normal covariates.
    pub fn mean(self) -> f64 {
        match self {
            GKind::I | GKind::II => 0.0,
            GKind::III => 2.0 / 110.0,
            GKind::IV => 2.0 / 105.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub f_kind: FKind,
    pub g_kind: GKind,
    pub sigma_eps: f64,
    pub n: usize,
    pub p_treat: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(f_kind: FKind, g_kind: GKind, sigma_eps: f64, n: usize, seed: u64) -> Self {
        Self {
            f_kind,
            g_kind,
            sigma_eps,
            n,
            p_treat: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::Config(format!("p_treat must lie in (0, 1), got {}", self.p_treat)));
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_eps must be finite and non-negative, got {}",
                self.sigma_eps
            )));
        }
        Ok(())
    }
}

/// Draws one dataset with covariate columns `x1, x2`.
pub fn generate(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = derived_rng(config.seed, &[tag::DATASET]);
    let n = config.n;
    let mut x = Matrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let arm = u8::from(rng.random::<f64>() < config.p_treat);
        let eps: f64 = rng.sample(StandardNormal);
        x.set(i, 0, x1);
        x.set(i, 1, x2);
        let effect = if arm == 1 { config.g_kind.eval(x1, x2) } else { 0.0 };
        y.push(config.f_kind.eval(x1, x2) + effect + config.sigma_eps * eps);
        a.push(arm);
    }
    Dataset::new(x, y, a)
}

pub fn true_ate(config: &DgpConfig) -> f64 {
    config.g_kind.mean()
}

/// `E[Y | X, A]`, the correctly specified outcome regression.
pub fn outcome_mean(config: &DgpConfig, x1: f64, x2: f64, a: u8) -> f64 {
    config.f_kind.eval(x1, x2) + f64::from(a) * config.g_kind.eval(x1, x2)
}
