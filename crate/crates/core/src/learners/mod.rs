//! Supervised learners behind one fit/predict contract.
//!
//! Two gradient-boosting profiles (`gbt_a`, `gbt_b`), ridge-regularised
//! linear and logistic regression, and stacking with a linear (or logistic)
//! meta-learner fitted on inner cross-fitted base predictions.

pub mod gbt;
pub mod linear;

use crate::error::{Error, Result};
use crate::folds::{fold_members, random_folds};
use crate::matrix::Matrix;
use crate::rng::derive_seed;
use gbt::{GbtModel, GbtParams, Loss};
use linear::{LinearModel, LogisticModel};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Probability outputs are clipped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    GbtA,
    GbtB,
    Linear,
    Logistic,
    Stacking,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::GbtA => "gbt_a",
            LearnerKind::GbtB => "gbt_b",
            LearnerKind::Linear => "linear",
            LearnerKind::Logistic => "logistic",
            LearnerKind::Stacking => "stacking",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt_a" => Ok(LearnerKind::GbtA),
            "gbt_b" => Ok(LearnerKind::GbtB),
            "linear" => Ok(LearnerKind::Linear),
            "logistic" => Ok(LearnerKind::Logistic),
            "stacking" => Ok(LearnerKind::Stacking),
            other => Err(Error::Config(format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub subsample: f64,
    pub l2: f64,
    /// Inner folds used to build stacking meta-features.
    pub inner_folds: usize,
}

impl Hyperparams {
    pub const GBT_A: Hyperparams = Hyperparams {
        trees: 200,
        depth: 6,
        learning_rate: 0.05,
        min_leaf: 20,
        subsample: 1.0,
        l2: 0.0,
        inner_folds: 2,
    };

    pub const GBT_B: Hyperparams = Hyperparams {
        trees: 300,
        depth: 4,
        learning_rate: 0.1,
        min_leaf: 10,
        subsample: 1.0,
        l2: 1.0,
        inner_folds: 2,
    };

    pub const LINEAR: Hyperparams = Hyperparams {
        trees: 0,
        depth: 0,
        learning_rate: 1.0,
        min_leaf: 1,
        subsample: 1.0,
        l2: 0.0,
        inner_folds: 2,
    };

    pub const LOGISTIC: Hyperparams = Hyperparams {
        l2: 1e-6,
        ..Hyperparams::LINEAR
    };

    fn gbt(&self) -> GbtParams {
        GbtParams {
            trees: self.trees,
            depth: self.depth,
            learning_rate: self.learning_rate,
            min_leaf: self.min_leaf,
            subsample: self.subsample,
            l2: self.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub params: Hyperparams,
    pub task: Task,
    /// Base learners, used only by `Stacking`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bases: Vec<LearnerSpec>,
}

impl LearnerSpec {
    pub fn gbt_a() -> Self {
        Self::plain(LearnerKind::GbtA, Hyperparams::GBT_A, Task::Regression)
    }

    pub fn gbt_b() -> Self {
        Self::plain(LearnerKind::GbtB, Hyperparams::GBT_B, Task::Regression)
    }

    pub fn linear() -> Self {
        Self::plain(LearnerKind::Linear, Hyperparams::LINEAR, Task::Regression)
    }

    pub fn logistic() -> Self {
        Self::plain(LearnerKind::Logistic, Hyperparams::LOGISTIC, Task::BinaryProbability)
    }

    /// Stacking of `gbt_a` and `gbt_b` with a linear meta-learner.
    pub fn stacking() -> Self {
        Self::stacking_of(vec![Self::gbt_a(), Self::gbt_b()])
    }

    pub fn stacking_of(bases: Vec<LearnerSpec>) -> Self {
        Self {
            kind: LearnerKind::Stacking,
            params: Hyperparams::LINEAR,
            task: Task::Regression,
            bases,
        }
    }

    /// Default spec for a learner name.
    pub fn from_kind(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::GbtA => Self::gbt_a(),
            LearnerKind::GbtB => Self::gbt_b(),
            LearnerKind::Linear => Self::linear(),
            LearnerKind::Logistic => Self::logistic(),
            LearnerKind::Stacking => Self::stacking(),
        }
    }

    fn plain(kind: LearnerKind, params: Hyperparams, task: Task) -> Self {
        Self {
            kind,
            params,
            task,
            bases: Vec::new(),
        }
    }

    /// The same learner family retargeted to `task`; linear and logistic swap.
    pub fn for_task(&self, task: Task) -> Self {
        let mut spec = self.clone();
        spec.task = task;
        match (spec.kind, task) {
            (LearnerKind::Linear, Task::BinaryProbability) => {
                spec.kind = LearnerKind::Logistic;
                spec.params.l2 = spec.params.l2.max(Hyperparams::LOGISTIC.l2);
            }
            (LearnerKind::Logistic, Task::Regression) => spec.kind = LearnerKind::Linear,
            _ => {}
        }
        spec.bases = spec.bases.iter().map(|b| b.for_task(task)).collect();
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |msg: String| Err(Error::Config(format!("{} learner: {msg}", self.kind)));
        if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", p.learning_rate));
        }
        if !(p.subsample > 0.0 && p.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", p.subsample));
        }
        if !(p.l2 >= 0.0 && p.l2.is_finite()) {
            return bad(format!("l2 must be >= 0, got {}", p.l2));
        }
        match self.kind {
            LearnerKind::GbtA | LearnerKind::GbtB if p.min_leaf == 0 => {
                bad("min_leaf must be at least 1".into())
            }
            LearnerKind::Logistic if self.task == Task::Regression => {
                bad("logistic regression needs the binary_probability task".into())
            }
            LearnerKind::Stacking => {
                if self.bases.len() < 2 {
                    return bad(format!("needs at least 2 base learners, got {}", self.bases.len()));
                }
                if p.inner_folds < 2 {
                    return bad("inner_folds must be at least 2".into());
                }
                self.bases.iter().try_for_each(LearnerSpec::validate)
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Model {
    Constant(f64),
    Gbt(GbtModel),
    Linear(LinearModel),
    Logistic(LogisticModel),
    Stacking {
        bases: Vec<FittedModel>,
        meta: Box<Model>,
    },
}

impl Model {
    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Constant(c) => *c,
            Model::Gbt(m) => m.predict_row(row),
            Model::Linear(m) => m.predict_row(row),
            Model::Logistic(m) => m.predict_row(row),
            Model::Stacking { .. } => unreachable!("stacking is predicted column-wise"),
        }
    }
}

/// A trained learner. Prediction is a pure function of the stored state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    model: Model,
    task: Task,
    train_row_ids: Vec<usize>,
}

impl FittedModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let raw: Vec<f64> = match &self.model {
            Model::Stacking { bases, meta } => {
                let features = meta_features(bases, x, self.task);
                (0..features.nrows()).map(|i| meta.predict_row(features.row(i))).collect()
            }
            m => (0..x.nrows()).map(|i| m.predict_row(x.row(i))).collect(),
        };
        match self.task {
            Task::Regression => raw,
            Task::BinaryProbability => {
                raw.into_iter().map(|p| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)).collect()
            }
        }
    }

    /// Rows (in the caller's indexing) the model was trained on.
    pub fn train_row_ids(&self) -> &[usize] {
        &self.train_row_ids
    }

    /// Maps local training row ids `0..n` to `global[i]`.
    pub fn relabel_rows(&mut self, global: &[usize]) {
        for id in &mut self.train_row_ids {
            *id = global[*id];
        }
    }

    /// Boosting training-loss curve, if the model is a boosted ensemble.
    pub fn loss_curve(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Gbt(m) => Some(&m.loss_curve),
            _ => None,
        }
    }

    pub fn linear_coefficients(&self) -> Option<(&[f64], f64)> {
        match &self.model {
            Model::Linear(m) => Some((&m.coefficients, m.intercept)),
            Model::Logistic(m) => Some((&m.linear.coefficients, m.linear.intercept)),
            _ => None,
        }
    }

    /// Meta-learner weights (then intercept) of a stacked model.
    pub fn stacking_weights(&self) -> Option<(&[f64], f64)> {
        match &self.model {
            Model::Stacking { meta, .. } => match meta.as_ref() {
                Model::Linear(m) => Some((&m.coefficients, m.intercept)),
                Model::Logistic(m) => Some((&m.linear.coefficients, m.linear.intercept)),
                _ => None,
            },
            _ => None,
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (p / (1.0 - p)).ln()
}

fn meta_features(bases: &[FittedModel], x: &Matrix, task: Task) -> Matrix {
    let columns: Vec<Vec<f64>> = bases
        .iter()
        .map(|b| {
            let pred = b.predict(x);
            match task {
                Task::Regression => pred,
                Task::BinaryProbability => pred.into_iter().map(logit).collect(),
            }
        })
        .collect();
    let mut m = Matrix::zeros(x.nrows(), bases.len());
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    m
}

fn check_inputs(task: Task, x: &Matrix, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Learner(format!(
            "{} feature rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Learner("cannot fit on zero rows".into()));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Learner("training data contains non-finite values".into()));
    }
    if task == Task::BinaryProbability && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Learner("binary targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Trains `spec` on `(x, y)`. Deterministic given `seed`.
pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[f64], seed: u64) -> Result<FittedModel> {
    spec.validate()?;
    if spec.kind == LearnerKind::Stacking {
        return fit_stacking(&spec.bases, x, y, spec.params.inner_folds, spec.task, seed);
    }
    check_inputs(spec.task, x, y)?;
    let n = y.len();
    let model = if spec.task == Task::BinaryProbability
        && (y.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 1.0))
    {
        Model::Constant(y[0].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
    } else {
        match spec.kind {
            LearnerKind::GbtA | LearnerKind::GbtB => {
                let loss = match spec.task {
                    Task::Regression => Loss::Squared,
                    Task::BinaryProbability => Loss::Logistic,
                };
                Model::Gbt(GbtModel::fit(&spec.params.gbt(), loss, x, y, seed)?)
            }
            LearnerKind::Linear | LearnerKind::Logistic => match spec.task {
                Task::Regression => Model::Linear(LinearModel::fit(x, y, spec.params.l2)?),
                Task::BinaryProbability => {
                    Model::Logistic(LogisticModel::fit(x, y, spec.params.l2)?)
                }
            },
            LearnerKind::Stacking => unreachable!(),
        }
    };
    Ok(FittedModel {
        model,
        task: spec.task,
        train_row_ids: (0..n).collect(),
    })
}

/// Stacking: base learners are inner-cross-fitted to produce out-of-fold
/// meta-features, the meta-learner (linear for regression, logistic on
/// base log-odds for probabilities) is fitted on them, and the bases are
/// then refitted on all rows.
pub fn fit_stacking(
    bases: &[LearnerSpec],
    x: &Matrix,
    y: &[f64],
    inner_folds: usize,
    task: Task,
    seed: u64,
) -> Result<FittedModel> {
    if bases.is_empty() {
        return Err(Error::Learner("stacking needs at least one base learner".into()));
    }
    if inner_folds < 2 {
        return Err(Error::Learner("stacking needs at least 2 inner folds".into()));
    }
    check_inputs(task, x, y)?;
    let bases: Vec<LearnerSpec> = bases.iter().map(|b| b.for_task(task)).collect();
    let n = y.len();
    let fold_of = random_folds(n, inner_folds, derive_seed(seed, &[0]))?;
    let members = fold_members(&fold_of, inner_folds);

    let mut oof = Matrix::zeros(n, bases.len());
    for (f, held_out) in members.iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let x_train = x.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let x_held = x.select_rows(held_out);
        for (b, spec) in bases.iter().enumerate() {
            let model = fit(spec, &x_train, &y_train, derive_seed(seed, &[1, f as u64, b as u64]))?;
            for (row, value) in held_out.iter().zip(model.predict(&x_held)) {
                let v = match task {
                    Task::Regression => value,
                    Task::BinaryProbability => logit(value),
                };
                oof.set(*row, b, v);
            }
        }
    }
    let meta = match task {
        Task::Regression => Model::Linear(LinearModel::fit(&oof, y, 0.0)?),
        Task::BinaryProbability => {
            if y.iter().all(|&v| v == y[0]) {
                Model::Constant(y[0].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
            } else {
                Model::Logistic(LogisticModel::fit(&oof, y, Hyperparams::LOGISTIC.l2)?)
            }
        }
    };
    let fitted_bases = bases
        .iter()
        .enumerate()
        .map(|(b, spec)| fit(spec, x, y, derive_seed(seed, &[2, b as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedModel {
        model: Model::Stacking {
            bases: fitted_bases,
            meta: Box::new(meta),
        },
        task,
        train_row_ids: (0..n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2d(n_side: usize) -> Matrix {
        let mut rows = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                rows.push(vec![i as f64 / n_side as f64, j as f64 / n_side as f64]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = grid_2d(8);
        let y = vec![7.0; x.nrows()];
        for spec in [LearnerSpec::gbt_a(), LearnerSpec::gbt_b(), LearnerSpec::linear()] {
            let m = fit(&spec, &x, &y, 3).unwrap();
            for p in m.predict(&grid_2d(5)) {
                assert!((p - 7.0).abs() < 1e-9, "{}: {p}", spec.kind);
            }
        }
    }

    #[test]
    fn empty_prediction_input() {
        let x = grid_2d(5);
        let y: Vec<f64> = (0..x.nrows()).map(|i| i as f64).collect();
        let m = fit(&LearnerSpec::linear(), &x, &y, 0).unwrap();
        assert!(m.predict(&Matrix::zeros(0, 2)).is_empty());
    }

    #[test]
    fn single_point_gbt() {
        let x = Matrix::from_rows(&[vec![0.3, -1.0]]).unwrap();
        let mut spec = LearnerSpec::gbt_a();
        spec.params.min_leaf = 1;
        spec.params.learning_rate = 1.0;
        let m = fit(&spec, &x, &[4.25], 0).unwrap();
        assert_eq!(m.predict(&x), vec![4.25]);
        assert!(fit(&LearnerSpec::gbt_a(), &x, &[4.25], 0).is_err());
    }

    #[test]
    fn separable_logistic_is_clipped() {
        let x = Matrix::from_columns(&[(0..40).map(|i| i as f64).collect()]).unwrap();
        let y: Vec<f64> = (0..40).map(|i| f64::from(u8::from(i >= 20))).collect();
        let m = fit(&LearnerSpec::logistic(), &x, &y, 0).unwrap();
        let probe = Matrix::from_columns(&[vec![-1000.0, 0.0, 19.5, 1000.0]]).unwrap();
        for p in m.predict(&probe) {
            assert!((PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p), "{p}");
        }
        let p = m.predict(&probe);
        assert_eq!(p[0], PROB_FLOOR);
        assert_eq!(p[3], 1.0 - PROB_FLOOR);
    }

    #[test]
    fn single_class_binary_is_constant() {
        let x = grid_2d(6);
        let y = vec![1.0; x.nrows()];
        let m = fit(&LearnerSpec::gbt_a().for_task(Task::BinaryProbability), &x, &y, 0).unwrap();
        assert!(m.predict(&x).iter().all(|&p| p == 1.0 - PROB_FLOOR));
    }

    #[test]
    fn depth_zero_gbt_predicts_mean() {
        let x = grid_2d(6);
        let y: Vec<f64> = (0..x.nrows()).map(|i| (i * i % 7) as f64).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mut spec = LearnerSpec::gbt_b();
        spec.params.depth = 0;
        let m = fit(&spec, &x, &y, 0).unwrap();
        for p in m.predict(&x) {
            assert!((p - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = LearnerSpec::gbt_a();
        s.params.subsample = 0.0;
        assert!(s.validate().is_err());
        let mut s = LearnerSpec::linear();
        s.params.l2 = -1.0;
        assert!(s.validate().is_err());
        let mut s = LearnerSpec::logistic();
        s.task = Task::Regression;
        assert!(s.validate().is_err());
        assert!(LearnerSpec::stacking_of(vec![LearnerSpec::linear()]).validate().is_err());
        assert!(LearnerSpec::stacking().validate().is_ok());
        assert_eq!("gbt_b".parse::<LearnerKind>().unwrap(), LearnerKind::GbtB);
        assert!("xgb".parse::<LearnerKind>().is_err());
    }

    #[test]
    fn task_retargeting() {
        let s = LearnerSpec::linear().for_task(Task::BinaryProbability);
        assert_eq!(s.kind, LearnerKind::Logistic);
        let s = LearnerSpec::stacking().for_task(Task::BinaryProbability);
        assert!(s.bases.iter().all(|b| b.task == Task::BinaryProbability));
    }
}
