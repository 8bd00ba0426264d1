//! Permuted WTAB: reorder the pseudo-outcomes `B` times, compute one WTAB
//! p-value per reordering and merge them with the Cauchy combination
//!
//! ```text
//! C_B = (1/B) * sum_b tan((0.5 - p_b) * pi),    p_a = 0.5 - atan(C_B) / pi
//! ```

use crate::dr_engine::{self, Dataset, NuisanceSource, DEFAULT_CLIP_EPS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::tab_statistic::{
    select_lambda_bootstrap, select_lambda_threshold, statistic_p_value, wtab_statistic,
    BootstrapNuisance, LambdaConfig, PseudoOutcomes,
};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const DEFAULT_B: usize = 25;
const P_CLIP: f64 = 1e-15;

/// `B` reorderings of `0..n`, reproducible from `(n, B, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub seed: u64,
    permutations: Vec<Vec<usize>>,
}

impl PermutationPlan {
    /// Independent uniform shuffles; the first one is not forced to be the identity.
    pub fn new(n: usize, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return Err(Error::domain("a permutation plan needs B >= 1"));
        }
        let permutations = (0..b)
            .map(|i| {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng_from_seed(derive_seed(seed, &[tag::PERMUTATION, i as u64])));
                perm
            })
            .collect();
        Ok(Self { seed, permutations })
    }

    /// A single identity ordering.
    pub fn identity(n: usize, seed: u64) -> Self {
        Self {
            seed,
            permutations: vec![(0..n).collect()],
        }
    }

    pub fn from_permutations(permutations: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        if permutations.is_empty() {
            return Err(Error::domain("a permutation plan needs B >= 1"));
        }
        let n = permutations[0].len();
        for perm in &permutations {
            let mut seen = vec![false; n];
            if perm.len() != n || perm.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::domain("every plan entry must be a bijection on 0..n"));
            }
        }
        Ok(Self { seed, permutations })
    }

    pub fn b(&self) -> usize {
        self.permutations.len()
    }

    pub fn n(&self) -> usize {
        self.permutations[0].len()
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }
}

/// Returns `(C_B, p_a)`. P-values are clipped to `[1e-15, 1 - 1e-15]` first.
pub fn cauchy_combine(p_values: &[f64]) -> Result<(f64, f64)> {
    if p_values.is_empty() {
        return Err(Error::domain("cannot combine an empty list of p-values"));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("p-values must lie in [0, 1]"));
    }
    // Summing in sorted order makes the result independent of the input order.
    let mut terms: Vec<f64> = p_values
        .iter()
        .map(|&p| ((0.5 - p.clamp(P_CLIP, 1.0 - P_CLIP)) * PI).tan())
        .collect();
    terms.sort_by(f64::total_cmp);
    let c = terms.iter().sum::<f64>() / terms.len() as f64;
    let p = (0.5 - c.atan() / PI).clamp(f64::MIN_POSITIVE, 1.0);
    Ok((c, p))
}

/// Largest deviation `|C_B(p) + C_B(1 - p)|`; zero up to rounding.
pub fn anti_symmetry_check(p_values: &[f64]) -> Result<f64> {
    let (c, _) = cauchy_combine(p_values)?;
    let mirrored: Vec<f64> = p_values.iter().map(|p| 1.0 - p).collect();
    let (c_mirror, _) = cauchy_combine(&mirrored)?;
    Ok((c + c_mirror).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub n: usize,
    pub ate_estimate: f64,
    pub sigma_hat: f64,
    pub lambda_used: f64,
    pub per_perm_stats: Vec<f64>,
    pub per_perm_p: Vec<f64>,
    pub cauchy_stat: f64,
    pub p_aggregated: f64,
    /// Rejection decision keyed by significance level.
    pub decision_at: BTreeMap<String, bool>,
}

/// Runs WTAB on every reordering of `seq` (sigma_hat and mean stay those of
/// the original sample) and aggregates the p-values.
pub fn pwtab_from_pseudo(
    seq: &PseudoOutcomes,
    lambda: f64,
    plan: &PermutationPlan,
    levels: &[f64],
) -> Result<TestReport> {
    if plan.n() != seq.len() {
        return Err(Error::domain(format!(
            "permutation plan covers {} rows but there are {} pseudo-outcomes",
            plan.n(),
            seq.len()
        )));
    }
    let stats: Vec<f64> = plan
        .permutations()
        .par_iter()
        .enumerate()
        .map(|(b, perm)| {
            let coin = derive_seed(plan.seed, &[tag::FIRST_ARM, b as u64]);
            wtab_statistic(&seq.reordered(perm)?, lambda, coin)
        })
        .collect::<Result<_>>()?;
    let per_perm_p: Vec<f64> = stats.iter().map(|&t| statistic_p_value(t)).collect();
    let (cauchy_stat, p_aggregated) = cauchy_combine(&per_perm_p)?;
    let decision_at = levels
        .iter()
        .map(|&alpha| (format!("{alpha}"), p_aggregated <= alpha))
        .collect();
    Ok(TestReport {
        n: seq.len(),
        ate_estimate: seq.mean(),
        sigma_hat: seq.sigma_hat(),
        lambda_used: lambda,
        per_perm_stats: stats,
        per_perm_p,
        cauchy_stat,
        p_aggregated,
        decision_at,
    })
}

/// Everything the full pipeline needs apart from the data and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwtabConfig {
    pub nuisance: NuisanceSource,
    pub clip_eps: f64,
    pub lambda: LambdaConfig,
    pub b: usize,
    pub levels: Vec<f64>,
}

impl Default for PwtabConfig {
    fn default() -> Self {
        Self {
            nuisance: NuisanceSource::default(),
            clip_eps: DEFAULT_CLIP_EPS,
            lambda: LambdaConfig::default(),
            b: DEFAULT_B,
            levels: vec![0.01, 0.05, 0.1],
        }
    }
}

/// Resolves the `lambda` to use for a pseudo-outcome sample.
pub fn resolve_lambda(
    config: &PwtabConfig,
    data: &Dataset,
    seq: &PseudoOutcomes,
    seed: u64,
) -> Result<f64> {
    match &config.lambda {
        LambdaConfig::Threshold { tau } => select_lambda_threshold(seq.sigma_hat(), seq.len(), *tau),
        LambdaConfig::Fixed { lambda } => {
            if !(0.0..1.0).contains(lambda) {
                return Err(Error::Config(format!("lambda must lie in [0, 1), got {lambda}")));
            }
            Ok(*lambda)
        }
        LambdaConfig::Bootstrap {
            grid,
            replicates,
            alpha,
        } => select_lambda_bootstrap(
            data,
            grid,
            *replicates,
            *alpha,
            &BootstrapNuisance {
                source: config.nuisance.clone(),
                clip_eps: config.clip_eps,
            },
            derive_seed(seed, &[tag::BOOTSTRAP]),
        ),
    }
}

/// Cross-fit, pseudo-outcomes, sigma_hat, lambda, `B` permuted WTAB runs,
/// Cauchy aggregation.
pub fn pwtab_test(data: &Dataset, config: &PwtabConfig, seed: u64) -> Result<TestReport> {
    pwtab_with_pseudo(data, config, seed).map(|(report, _)| report)
}

/// [`pwtab_test`] that also hands back the pseudo-outcomes it built.
pub fn pwtab_with_pseudo(
    data: &Dataset,
    config: &PwtabConfig,
    seed: u64,
) -> Result<(TestReport, PseudoOutcomes)> {
    let fits = dr_engine::cross_fit(data, &config.nuisance, config.clip_eps, seed)?;
    let seq = dr_engine::dr_pseudo_outcomes(data, &fits)?;
    if !(seq.sigma_hat() > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let lambda = resolve_lambda(config, data, &seq, seed)?;
    let plan = PermutationPlan::new(seq.len(), config.b, derive_seed(seed, &[tag::PERMUTATION]))?;
    let report = pwtab_from_pseudo(&seq, lambda, &plan, &config.levels)?;
    Ok((report, seq))
}
