//! Monte Carlo check of the limiting law of the WTAB statistic under the
//! tail-maximising policy with IID normal rewards.

use crate::bandit_dist::{bandit_cdf, bandit_tail_prob, BanditParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_rng, tag};
use crate::stats::ks_statistic;
use crate::tab_statistic::{run_optimal_policy, RewardSequence};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// KS assertions are only meaningful when `sigma / ((1 - lambda) sqrt(n))` is at most this.
pub const RATE_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScltReport {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub n: usize,
    pub reps: usize,
    pub omega: f64,
    pub sigma0: f64,
    pub ks_distance: f64,
    /// `sigma / ((1 - lambda) sqrt(n))`.
    pub rate_bound: f64,
    pub assertable: bool,
    /// Empirical `P(|T| > threshold)` and its limiting value.
    pub threshold: f64,
    pub empirical_tail: f64,
    pub theoretical_tail: f64,
}

/// Final statistics of `reps` independent policy runs.
pub fn simulate_statistics(
    mu: f64,
    sigma: f64,
    lambda: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived_rng(seed, &[tag::REPLICATION, r as u64]);
            let rewards: Vec<f64> = (0..n)
                .map(|_| mu + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let seq = RewardSequence::new(rewards)?;
            Ok(run_optimal_policy(&seq, lambda, derive_seed(seed, &[tag::FIRST_ARM, r as u64]))?
                .statistic())
        })
        .collect()
}

pub fn run_sclt_check(
    mu: f64,
    sigma: f64,
    lambda: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ScltReport> {
    if reps == 0 {
        return Err(Error::domain("sclt check needs at least one replication"));
    }
    let params = BanditParams::from_effect(mu, sigma, lambda, n)?;
    let stats = simulate_statistics(mu, sigma, lambda, n, reps, seed)?;
    let ks_distance = ks_statistic(&stats, |t| bandit_cdf(t, params))?;
    let threshold = 1.959963984540054;
    let empirical_tail =
        stats.iter().filter(|t| t.abs() > threshold).count() as f64 / reps as f64;
    let rate_bound = sigma / ((1.0 - lambda) * (n as f64).sqrt());
    Ok(ScltReport {
        mu,
        sigma,
        lambda,
        n,
        reps,
        omega: params.omega,
        sigma0: params.sigma0,
        ks_distance,
        rate_bound,
        assertable: rate_bound <= RATE_LIMIT,
        threshold,
        empirical_tail,
        theoretical_tail: bandit_tail_prob(threshold, params)?,
    })
}
