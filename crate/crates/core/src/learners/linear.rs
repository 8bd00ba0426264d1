//! Least-squares and logistic regression with an unpenalised intercept.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative ridge added when the Gram matrix is numerically singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x.get(i, j)).sum::<f64>() / n)
        .collect()
}

/// Solves `(G + l2*I) b = r` by Cholesky; falls back to a small relative ridge
/// when the system is singular or badly conditioned.
fn solve_normal_equations(gram: &DMatrix<f64>, rhs: &DVector<f64>, l2: f64) -> DVector<f64> {
    let d = gram.nrows();
    if d == 0 {
        return DVector::zeros(0);
    }
    let mean_diag = (gram.trace() / d as f64).max(f64::MIN_POSITIVE);
    let attempt = |ridge: f64| {
        let mut a = gram.clone();
        for i in 0..d {
            a[(i, i)] += ridge;
        }
        a.cholesky().and_then(|c| {
            let l = c.l();
            let diag_min = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            // Pivots this small relative to the scale mean the columns are collinear.
            if diag_min < 1e-12 * mean_diag {
                None
            } else {
                Some(c.solve(rhs))
            }
        })
    };
    attempt(l2)
        .or_else(|| attempt(l2 + RIDGE_FALLBACK * mean_diag))
        .unwrap_or_else(|| DVector::zeros(d))
}

impl LinearModel {
    /// Ridge regression on centred data; `l2` penalises slopes only.
    pub fn fit(x: &Matrix, y: &[f64], l2: f64) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if n == 0 || n != y.len() {
            return Err(Error::Learner("linear fit needs matching, non-empty inputs".into()));
        }
        let x_mean = column_means(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        let mut centred = vec![0.0; d];
        for i in 0..n {
            let row = x.row(i);
            for j in 0..d {
                centred[j] = row[j] - x_mean[j];
            }
            let yc = y[i] - y_mean;
            for j in 0..d {
                rhs[j] += centred[j] * yc;
                for k in 0..=j {
                    gram[(j, k)] += centred[j] * centred[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                gram[(k, j)] = gram[(j, k)];
            }
        }
        let beta = solve_normal_equations(&gram, &rhs, l2);
        let coefficients: Vec<f64> = beta.iter().copied().collect();
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
            intercept,
            coefficients,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub linear: LinearModel,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    const MAX_ITER: usize = 100;

    /// Penalised Newton iterations with backtracking. `y` must be 0/1.
    pub fn fit(x: &Matrix, y: &[f64], l2: f64) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if n == 0 || n != y.len() {
            return Err(Error::Learner("logistic fit needs matching, non-empty inputs".into()));
        }
        let x_mean = column_means(x);
        // Design with a leading intercept column, features centred.
        let p = d + 1;
        let design = |i: usize, j: usize| if j == 0 { 1.0 } else { x.get(i, j - 1) - x_mean[j - 1] };
        let objective = |w: &DVector<f64>| -> f64 {
            let mut total = 0.0;
            for i in 0..n {
                let f: f64 = (0..p).map(|j| design(i, j) * w[j]).sum();
                let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
                total += softplus - y[i] * f;
            }
            total + 0.5 * l2 * w.iter().skip(1).map(|v| v * v).sum::<f64>()
        };

        let mut w = DVector::<f64>::zeros(p);
        let mut current = objective(&w);
        for _ in 0..Self::MAX_ITER {
            let mut grad = DVector::<f64>::zeros(p);
            let mut hess = DMatrix::<f64>::zeros(p, p);
            for i in 0..n {
                let f: f64 = (0..p).map(|j| design(i, j) * w[j]).sum();
                let mu = sigmoid(f);
                let weight = (mu * (1.0 - mu)).max(1e-12);
                for j in 0..p {
                    let xj = design(i, j);
                    grad[j] += (mu - y[i]) * xj;
                    for k in 0..=j {
                        hess[(j, k)] += weight * xj * design(i, k);
                    }
                }
            }
            for j in 0..p {
                for k in 0..j {
                    hess[(k, j)] = hess[(j, k)];
                }
            }
            for j in 1..p {
                grad[j] += l2 * w[j];
                hess[(j, j)] += l2;
            }
            let step = solve_normal_equations(&hess, &grad, 0.0);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let candidate = &w - &step * t;
                let value = objective(&candidate);
                if value <= current {
                    w = candidate;
                    current = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || step.amax() * t < 1e-10 {
                break;
            }
        }
        let coefficients: Vec<f64> = w.iter().skip(1).copied().collect();
        let intercept = w[0] - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
            linear: LinearModel {
                intercept,
                coefficients,
            },
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear.predict_row(row))
    }
}
