//! Replication studies over a grid of synthetic experiments.

use super::config::{Reader, Settings};
use crate::baselines::{cuped_test, dim_test, zdml_test};
use crate::dgp::{self, DgpConfig, FKind, GKind};
use crate::dr_engine::{self, NuisanceSource, Propensity, DEFAULT_CLIP_EPS};
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, LearnerSpec};
use crate::meta_perm::{pwtab_from_pseudo, resolve_lambda, PermutationPlan, PwtabConfig, DEFAULT_B};
use crate::rng::{derive_seed, tag};
use crate::stats;
use crate::tab_statistic::{
    statistic_p_value, wtab_statistic, LambdaConfig, PseudoOutcomes, DEFAULT_TAU,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PWTAB")]
    Pwtab,
    #[serde(rename = "WTAB")]
    Wtab,
    #[serde(rename = "zDML")]
    ZDml,
    #[serde(rename = "CUPED")]
    Cuped,
    #[serde(rename = "DIM")]
    Dim,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Pwtab, Method::Wtab, Method::ZDml, Method::Cuped, Method::Dim];

    /// Whether the method consumes cross-fitted pseudo-outcomes.
    pub fn needs_nuisance(self) -> bool {
        matches!(self, Method::Pwtab | Method::Wtab | Method::ZDml)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pwtab => "PWTAB",
            Method::Wtab => "WTAB",
            Method::ZDml => "zDML",
            Method::Cuped => "CUPED",
            Method::Dim => "DIM",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub f: Vec<FKind>,
    pub g: Vec<GKind>,
    pub sigma_eps: Vec<f64>,
    pub n: Vec<usize>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub alpha: f64,
    pub learner: LearnerSpec,
    pub k: usize,
    pub propensity: Propensity,
    pub clip_eps: f64,
    pub lambda: LambdaConfig,
    pub b: usize,
    pub root_seed: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            f: vec![FKind::I],
            g: vec![GKind::I],
            sigma_eps: vec![0.5],
            n: vec![20_000],
            methods: Method::ALL.to_vec(),
            replications: 500,
            alpha: 0.05,
            learner: LearnerSpec::gbt_a(),
            k: dr_engine::DEFAULT_FOLDS,
            propensity: Propensity::Known(0.5),
            clip_eps: DEFAULT_CLIP_EPS,
            lambda: LambdaConfig::default(),
            b: DEFAULT_B,
            root_seed: 0,
        }
    }
}

impl ExperimentGrid {
    /// Builds a grid from manifest settings; absent keys keep their defaults.
    ///
    /// Keys: `f`, `g`, `sigma_eps`, `n`, `methods`, `reps`, `alpha`, `learner`,
    /// `trees`, `depth`, `learning_rate`, `min_leaf`, `subsample`, `l2`, `k`,
    /// `propensity`, `clip_eps`, `tau`, `lambda`, `b`, `seed`.
    pub fn from_settings(settings: &Settings) -> Result<Self> {
        let d = Self::default();
        let r = Reader::new(settings);
        let kind: LearnerKind = r.get("learner", LearnerKind::GbtA)?;
        let mut learner = LearnerSpec::from_kind(kind);
        let p = &mut learner.params;
        p.trees = r.get("trees", p.trees)?;
        p.depth = r.get("depth", p.depth)?;
        p.learning_rate = r.get("learning_rate", p.learning_rate)?;
        p.min_leaf = r.get("min_leaf", p.min_leaf)?;
        p.subsample = r.get("subsample", p.subsample)?;
        p.l2 = r.get("l2", p.l2)?;
        let lambda = match (r.raw("lambda"), r.raw("tau")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either `lambda` or `tau`, not both".into()))
            }
            (Some(_), None) => LambdaConfig::Fixed {
                lambda: r.get("lambda", 0.0)?,
            },
            (None, _) => LambdaConfig::Threshold {
                tau: r.get("tau", DEFAULT_TAU)?,
            },
        };
        let grid = Self {
            f: r.list("f", d.f)?,
            g: r.list("g", d.g)?,
            sigma_eps: r.list("sigma_eps", d.sigma_eps)?,
            n: r.list("n", d.n)?,
            methods: r.list("methods", d.methods)?,
            replications: r.get("reps", d.replications)?,
            alpha: r.get("alpha", d.alpha)?,
            learner,
            k: r.get("k", d.k)?,
            propensity: r.get("propensity", d.propensity)?,
            clip_eps: r.get("clip_eps", d.clip_eps)?,
            lambda,
            b: r.get("b", d.b)?,
            root_seed: r.get("seed", d.root_seed)?,
        };
        r.finish()?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.f.is_empty() || self.g.is_empty() || self.sigma_eps.is_empty() || self.n.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.b == 0 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("K must be at least 2".into()));
        }
        self.learner.validate()?;
        for &n in &self.n {
            DgpConfig::new(FKind::I, GKind::I, self.sigma_eps[0], n, 0).validate()?;
        }
        for &s in &self.sigma_eps {
            DgpConfig::new(FKind::I, GKind::I, s, 2, 0).validate()?;
        }
        Ok(())
    }

    fn pwtab_config(&self) -> PwtabConfig {
        PwtabConfig {
            nuisance: NuisanceSource {
                learner: self.learner.clone(),
                k: self.k,
                propensity: self.propensity,
            },
            clip_eps: self.clip_eps,
            lambda: self.lambda.clone(),
            b: self.b,
            levels: vec![self.alpha],
        }
    }

    fn cells(&self) -> Vec<DgpConfig> {
        let mut out = Vec::new();
        for &f in &self.f {
            for &g in &self.g {
                for &s in &self.sigma_eps {
                    for &n in &self.n {
                        out.push(DgpConfig::new(f, g, s, n, 0));
                    }
                }
            }
        }
        out
    }
}

/// Seed of one replication, a hash of its cell coordinates and index.
pub fn replication_seed(root: u64, cell: &DgpConfig, rep: usize) -> u64 {
    derive_seed(
        root,
        &[
            tag::REPLICATION,
            cell.f_kind as u64,
            cell.g_kind as u64,
            cell.sigma_eps.to_bits(),
            cell.n as u64,
            rep as u64,
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate.
    pub stderr: f64,
    pub mean_estimate: f64,
    pub var_estimate: f64,
    /// Two-sided p-values of the successful replications, in replication order.
    pub p_values: Vec<f64>,
    /// First error message, if any replication failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub f: FKind,
    pub g: GKind,
    pub sigma_eps: f64,
    pub n: usize,
    pub true_ate: f64,
    pub methods: Vec<MethodSummary>,
}

impl CellReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: ExperimentGrid,
    pub cells: Vec<CellReport>,
    /// Number of cross-fitting runs performed over the whole study.
    pub cross_fits: usize,
    pub runtime_secs: f64,
}

type Outcome = std::result::Result<(f64, f64), String>;

/// (estimate, two-sided p) per selected method, in `methods` order.
fn run_replication(
    grid: &ExperimentGrid,
    pwtab: &PwtabConfig,
    cell: &DgpConfig,
    seed: u64,
    cross_fits: &AtomicUsize,
) -> Vec<Outcome> {
    let cfg = DgpConfig { seed, ..cell.clone() };
    let data = match dgp::generate(&cfg) {
        Ok(d) => d,
        Err(e) => return vec![Err(e.to_string()); grid.methods.len()],
    };
    // Built only when a selected method needs it.
    let pseudo = if grid.methods.iter().any(|m| m.needs_nuisance()) {
        cross_fits.fetch_add(1, Ordering::Relaxed);
        dr_engine::cross_fit(&data, &pwtab.nuisance, pwtab.clip_eps, seed)
            .and_then(|fits| dr_engine::dr_pseudo_outcomes(&data, &fits))
            .map_err(|e| e.to_string())
    } else {
        Err(String::new())
    };
    let lambda = |seq: &PseudoOutcomes| resolve_lambda(pwtab, &data, seq, seed).map_err(|e| e.to_string());
    let all_columns: Vec<usize> = (0..data.n_covariates()).collect();
    grid.methods
        .iter()
        .map(|m| match m {
            Method::Dim => dim_test(&data)
                .map(|r| (r.estimate, r.p_two_sided))
                .map_err(|e| e.to_string()),
            Method::Cuped => cuped_test(&data, &all_columns)
                .map(|r| (r.estimate, r.p_two_sided))
                .map_err(|e| e.to_string()),
            Method::ZDml => {
                let seq = pseudo.as_ref().map_err(Clone::clone)?;
                zdml_test(seq)
                    .map(|r| (r.estimate, r.p_two_sided))
                    .map_err(|e| e.to_string())
            }
            Method::Wtab => {
                let seq = pseudo.as_ref().map_err(Clone::clone)?;
                let l = lambda(seq)?;
                wtab_statistic(seq, l, derive_seed(seed, &[tag::WTAB]))
                    .map(|t| (seq.mean(), statistic_p_value(t)))
                    .map_err(|e| e.to_string())
            }
            Method::Pwtab => {
                let seq = pseudo.as_ref().map_err(Clone::clone)?;
                let l = lambda(seq)?;
                PermutationPlan::new(seq.len(), pwtab.b, derive_seed(seed, &[tag::PERMUTATION]))
                    .and_then(|plan| pwtab_from_pseudo(seq, l, &plan, &pwtab.levels))
                    .map(|r| (r.ate_estimate, r.p_aggregated))
                    .map_err(|e| e.to_string())
            }
        })
        .collect()
}

fn summarize(method: Method, outcomes: &[&Outcome], alpha: f64) -> MethodSummary {
    let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    let first_error = outcomes.iter().find_map(|o| o.as_ref().err().cloned());
    let n_ok = ok.len();
    let rejections = ok.iter().filter(|(_, p)| *p <= alpha).count();
    let rate = if n_ok > 0 { rejections as f64 / n_ok as f64 } else { 0.0 };
    let estimates: Vec<f64> = ok.iter().map(|(e, _)| *e).collect();
    MethodSummary {
        method,
        n_ok,
        n_failed: outcomes.len() - n_ok,
        rejections,
        rejection_rate: rate,
        stderr: if n_ok > 0 { (rate * (1.0 - rate) / n_ok as f64).sqrt() } else { 0.0 },
        mean_estimate: if n_ok > 0 { stats::mean(&estimates) } else { f64::NAN },
        var_estimate: stats::sample_variance(&estimates),
        p_values: ok.iter().map(|(_, p)| *p).collect(),
        first_error,
    }
}

/// Runs every selected method on `replications` datasets per grid cell.
/// Replications run on the current rayon pool.
pub fn run_study(grid: &ExperimentGrid) -> Result<StudyReport> {
    grid.validate()?;
    let start = Instant::now();
    let pwtab = grid.pwtab_config();
    let cross_fits = AtomicUsize::new(0);
    let mut cells = Vec::new();
    for cell in grid.cells() {
        let per_rep: Vec<Vec<Outcome>> = (0..grid.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = replication_seed(grid.root_seed, &cell, rep);
                run_replication(grid, &pwtab, &cell, seed, &cross_fits)
            })
            .collect();
        let methods = grid
            .methods
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let column: Vec<&Outcome> = per_rep.iter().map(|r| &r[j]).collect();
                summarize(m, &column, grid.alpha)
            })
            .collect();
        cells.push(CellReport {
            f: cell.f_kind,
            g: cell.g_kind,
            sigma_eps: cell.sigma_eps,
            n: cell.n,
            true_ate: dgp::true_ate(&cell),
            methods,
        });
    }
    Ok(StudyReport {
        config: grid.clone(),
        cells,
        cross_fits: cross_fits.into_inner(),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// One row per (cell, method).
pub fn study_csv(study: &StudyReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "f", "g", "sigma_eps", "n", "method", "n_ok", "n_failed", "rejections", "rejection_rate",
        "stderr", "mean_estimate", "var_estimate",
    ])?;
    for c in &study.cells {
        for m in &c.methods {
            w.write_record([
                c.f.to_string(),
                c.g.to_string(),
                c.sigma_eps.to_string(),
                c.n.to_string(),
                m.method.to_string(),
                m.n_ok.to_string(),
                m.n_failed.to_string(),
                m.rejections.to_string(),
                m.rejection_rate.to_string(),
                m.stderr.to_string(),
                m.mean_estimate.to_string(),
                m.var_estimate.to_string(),
            ])?;
        }
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    F,
    G,
    SigmaEps,
    N,
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "f" => Ok(Axis::F),
            "g" => Ok(Axis::G),
            "sigma_eps" => Ok(Axis::SigmaEps),
            "n" => Ok(Axis::N),
            _ => Err(Error::Config(format!("unknown axis `{s}`"))),
        }
    }
}

/// Long-format `(method, axis_value, rejection_rate, stderr)` rows sorted by
/// method and then axis value.
pub fn emit_power_curves(study: &StudyReport, axis: Axis) -> Result<String> {
    let mut rows: Vec<(Method, f64, String, f64, f64)> = Vec::new();
    for c in &study.cells {
        let (key, label) = match axis {
            Axis::F => (c.f as usize as f64, c.f.to_string()),
            Axis::G => (c.g as usize as f64, c.g.to_string()),
            Axis::SigmaEps => (c.sigma_eps, c.sigma_eps.to_string()),
            Axis::N => (c.n as f64, c.n.to_string()),
        };
        for m in &c.methods {
            rows.push((m.method, key, label.clone(), m.rejection_rate, m.stderr));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "axis_value", "rejection_rate", "stderr"])?;
    for (m, _, label, rate, se) in rows {
        w.write_record([m.to_string(), label, rate.to_string(), se.to_string()])?;
    }
    into_string(w)
}
