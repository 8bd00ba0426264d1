//! Cross-fitted doubly robust pseudo-outcomes.
//!
//! The outcome regressions `m0`, `m1` and the propensity `e` are estimated on
//! `K - 1` folds and evaluated on the held-out fold, so no subject's nuisance
//! predictions come from a model that saw it. Each subject then receives
//!
//! ```text
//! mu_i = m1(x_i) + A_i/e(x_i) * (Y_i - m1(x_i)) - m0(x_i) - (1-A_i)/(1-e(x_i)) * (Y_i - m0(x_i))
//! ```

use crate::error::{Error, Result};
use crate::folds::{fold_members, random_folds};
use crate::learners::{self, FittedModel, LearnerSpec, Task};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, tag};
use crate::tab_statistic::PseudoOutcomes;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_CLIP_EPS: f64 = 0.01;
pub const DEFAULT_FOLDS: usize = 2;
const FOLD_ATTEMPTS: u64 = 5;

/// Observational data: covariates, outcome, binary treatment, optional folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    a: Vec<u8>,
    fold_id: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, a: Vec<u8>) -> Result<Self> {
        if x.nrows() != y.len() || y.len() != a.len() {
            return Err(Error::domain(format!(
                "dataset columns disagree: {} covariate rows, {} outcomes, {} treatments",
                x.nrows(),
                y.len(),
                a.len()
            )));
        }
        if let Some(bad) = a.iter().find(|&&v| v > 1) {
            return Err(Error::domain(format!("treatment must be 0 or 1, got {bad}")));
        }
        Ok(Self {
            x,
            y,
            a,
            fold_id: None,
        })
    }

    /// Attaches a user-supplied fold assignment, used instead of random folds.
    pub fn with_folds(mut self, fold_id: Vec<usize>) -> Result<Self> {
        if fold_id.len() != self.len() {
            return Err(Error::domain("fold assignment length differs from dataset length"));
        }
        self.fold_id = Some(fold_id);
        Ok(self)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn fold_id(&self) -> Option<&[usize]> {
        self.fold_id.as_deref()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// (n_control, n_treated)
    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.a.iter().filter(|&&v| v == 1).count();
        (self.len() - treated, treated)
    }

    pub fn require_both_arms(&self) -> Result<()> {
        let (n0, n1) = self.arm_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::domain(format!(
                "both treatment groups must be non-empty (control {n0}, treated {n1})"
            )));
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            fold_id: None,
        }
    }

    /// Rows `rows` (with repetition) relabelled with new treatment values.
    pub fn resample(&self, rows: &[usize], a: Vec<u8>) -> Result<Dataset> {
        Dataset::new(
            self.x.select_rows(rows),
            rows.iter().map(|&i| self.y[i]).collect(),
            a,
        )
    }
}

/// How the propensity score is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Propensity {
    /// Randomised assignment with a known constant probability; no model is trained.
    Known(f64),
    Fit,
}

impl std::str::FromStr for Propensity {
    type Err = Error;

    /// `known:0.5` or `fit`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "fit" {
            return Ok(Propensity::Fit);
        }
        if let Some(v) = s.strip_prefix("known:") {
            let p: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad propensity value `{v}`")))?;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("known propensity must lie in (0, 1), got {p}")));
            }
            return Ok(Propensity::Known(p));
        }
        Err(Error::Config(format!(
            "propensity must be `fit` or `known:<p>`, got `{s}`"
        )))
    }
}

/// Learner, fold count and propensity handling used to estimate nuisances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSource {
    pub learner: LearnerSpec,
    pub k: usize,
    pub propensity: Propensity,
}

impl Default for NuisanceSource {
    fn default() -> Self {
        Self {
            learner: LearnerSpec::gbt_a(),
            k: DEFAULT_FOLDS,
            propensity: Propensity::Known(0.5),
        }
    }
}

/// Out-of-fold nuisance predictions, aligned with the dataset rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub m0_hat: Vec<f64>,
    pub m1_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub clip_eps: f64,
    /// Fold of every row (empty when the fits were supplied directly).
    pub fold_of: Vec<usize>,
    /// Union of training rows over the models used for each fold.
    pub fold_train_rows: Vec<BTreeSet<usize>>,
}

impl NuisanceFits {
    /// Wraps externally supplied nuisance values; `e_hat` is clipped to
    /// `[clip_eps, 1 - clip_eps]`.
    pub fn new(m0_hat: Vec<f64>, m1_hat: Vec<f64>, e_hat: Vec<f64>, clip_eps: f64) -> Result<Self> {
        if m0_hat.len() != m1_hat.len() || m1_hat.len() != e_hat.len() {
            return Err(Error::domain("nuisance vectors have different lengths"));
        }
        check_clip(clip_eps)?;
        Ok(Self {
            m0_hat,
            m1_hat,
            e_hat: e_hat.into_iter().map(|e| clip(e, clip_eps)).collect(),
            clip_eps,
            fold_of: Vec::new(),
            fold_train_rows: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.e_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_hat.is_empty()
    }
}

fn check_clip(clip_eps: f64) -> Result<()> {
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(Error::domain(format!("clip_eps must lie in (0, 0.5), got {clip_eps}")));
    }
    Ok(())
}

fn clip(e: f64, eps: f64) -> f64 {
    e.clamp(eps, 1.0 - eps)
}

fn folds_have_both_arms(a: &[u8], fold_of: &[usize], k: usize) -> bool {
    let mut seen = vec![[false; 2]; k];
    let mut total = [false; 2];
    for (&arm, &f) in a.iter().zip(fold_of) {
        seen[f][arm as usize] = true;
        total[arm as usize] = true;
    }
    // Each held-out fold and each training complement must contain both arms.
    seen.iter().all(|s| s[0] && s[1])
        && (0..k).all(|f| {
            (0..2).all(|arm| seen.iter().enumerate().any(|(g, s)| g != f && s[arm]))
        })
        && total[0]
        && total[1]
}

/// Deals each arm's shuffled members round-robin over the folds.
fn stratified_folds(a: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut fold_of = vec![0; a.len()];
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut next = 0;
    for arm in 0..2u8 {
        let mut members: Vec<usize> = (0..a.len()).filter(|&i| a[i] == arm).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    fold_of
}

/// Chooses folds: the dataset's own assignment if present, otherwise seeded
/// random folds, re-drawn up to five times, then stratified by arm.
pub fn assign_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::domain(format!("cross-fitting needs K >= 2, got {k}")));
    }
    if data.len() < 2 * k {
        return Err(Error::domain(format!(
            "cross-fitting {} rows into {k} folds needs at least {} rows",
            data.len(),
            2 * k
        )));
    }
    if let Some(user) = data.fold_id() {
        if user.iter().any(|&f| f >= k) {
            return Err(Error::Fold(format!("fold ids must lie in 0..{k}")));
        }
        if !folds_have_both_arms(data.a(), user, k) {
            return Err(Error::Fold("a supplied fold lacks one treatment arm".into()));
        }
        return Ok(user.to_vec());
    }
    for attempt in 0..FOLD_ATTEMPTS {
        let fold_of = random_folds(data.len(), k, derive_seed(seed, &[attempt]))?;
        if folds_have_both_arms(data.a(), &fold_of, k) {
            return Ok(fold_of);
        }
    }
    let fold_of = stratified_folds(data.a(), k, derive_seed(seed, &[FOLD_ATTEMPTS]));
    if folds_have_both_arms(data.a(), &fold_of, k) {
        Ok(fold_of)
    } else {
        Err(Error::Fold(format!(
            "cannot build {k} folds that each contain both treatment arms"
        )))
    }
}

struct FoldFit {
    m0: Vec<f64>,
    m1: Vec<f64>,
    e: Option<Vec<f64>>,
    train_rows: BTreeSet<usize>,
}

fn fit_on_rows(
    spec: &LearnerSpec,
    data: &Dataset,
    rows: &[usize],
    target: impl Fn(usize) -> f64,
    seed: u64,
) -> Result<FittedModel> {
    let x = data.x().select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&i| target(i)).collect();
    let mut model = learners::fit(spec, &x, &y, seed)?;
    model.relabel_rows(rows);
    Ok(model)
}

/// K-fold cross-fitting of `m0`, `m1` and (unless known) `e`.
pub fn cross_fit(
    data: &Dataset,
    source: &NuisanceSource,
    clip_eps: f64,
    seed: u64,
) -> Result<NuisanceFits> {
    check_clip(clip_eps)?;
    data.require_both_arms()?;
    source.learner.validate()?;
    let k = source.k;
    let fold_of = assign_folds(data, k, derive_seed(seed, &[tag::FOLDS]))?;
    let members = fold_members(&fold_of, k);
    let regression = source.learner.for_task(Task::Regression);
    let classifier = source.learner.for_task(Task::BinaryProbability);

    let fits: Vec<FoldFit> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<FoldFit> {
            let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
            let (train0, train1): (Vec<usize>, Vec<usize>) =
                train.iter().partition(|&&i| data.a()[i] == 0);
            let held = data.x().select_rows(&members[f]);
            let fold_seed = |which: u64| derive_seed(seed, &[tag::LEARNER, f as u64, which]);
            let y = data.y();
            let m0 = fit_on_rows(&regression, data, &train0, |i| y[i], fold_seed(0))?;
            let m1 = fit_on_rows(&regression, data, &train1, |i| y[i], fold_seed(1))?;
            let mut train_rows: BTreeSet<usize> = m0.train_row_ids().iter().copied().collect();
            train_rows.extend(m1.train_row_ids().iter().copied());
            let e = match source.propensity {
                Propensity::Known(_) => None,
                Propensity::Fit => {
                    let a = data.a();
                    let model =
                        fit_on_rows(&classifier, data, &train, |i| f64::from(a[i]), fold_seed(2))?;
                    train_rows.extend(model.train_row_ids().iter().copied());
                    Some(model.predict(&held))
                }
            };
            Ok(FoldFit {
                m0: m0.predict(&held),
                m1: m1.predict(&held),
                e,
                train_rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.len();
    let (mut m0_hat, mut m1_hat, mut e_hat) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut fold_train_rows = Vec::with_capacity(k);
    for (f, fit) in fits.into_iter().enumerate() {
        for (j, &i) in members[f].iter().enumerate() {
            m0_hat[i] = fit.m0[j];
            m1_hat[i] = fit.m1[j];
            e_hat[i] = match (&fit.e, source.propensity) {
                (Some(e), _) => clip(e[j], clip_eps),
                (None, Propensity::Known(p)) => clip(p, clip_eps),
                (None, Propensity::Fit) => unreachable!(),
            };
        }
        fold_train_rows.push(fit.train_rows);
    }
    Ok(NuisanceFits {
        m0_hat,
        m1_hat,
        e_hat,
        clip_eps,
        fold_of,
        fold_train_rows,
    })
}

/// Per-subject doubly robust scores with their mean and standard deviation.
pub fn dr_pseudo_outcomes(data: &Dataset, fits: &NuisanceFits) -> Result<PseudoOutcomes> {
    if fits.len() != data.len() {
        return Err(Error::domain("nuisance fits are not aligned with the dataset"));
    }
    let mu: Vec<f64> = (0..data.len())
        .map(|i| {
            let (y, m0, m1) = (data.y()[i], fits.m0_hat[i], fits.m1_hat[i]);
            let e = fits.e_hat[i];
            if data.a()[i] == 1 {
                m1 + (y - m1) / e - m0
            } else {
                m1 - m0 - (y - m0) / (1.0 - e)
            }
        })
        .collect();
    PseudoOutcomes::new(mu)
}

/// The DR estimate of the average treatment effect: the mean pseudo-outcome.
pub fn ate_point_estimate(p: &PseudoOutcomes) -> f64 {
    p.mean()
}
