//! Comparator tests: difference in means (DIM), CUPED and the z-test on
//! doubly robust pseudo-outcomes (zDML).

use crate::bandit_dist::normal_cdf;
use crate::dr_engine::Dataset;
use crate::error::{Error, Result};
use crate::learners::linear::LinearModel;
use crate::stats;
use crate::tab_statistic::PseudoOutcomes;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Smallest reported p-value; reached when the variance estimate is zero.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    #[serde(rename = "DIM")]
    Dim,
    #[serde(rename = "CUPED")]
    Cuped,
    #[serde(rename = "zDML")]
    ZDml,
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::Dim => "DIM",
            BaselineMethod::Cuped => "CUPED",
            BaselineMethod::ZDml => "zDML",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub estimate: f64,
    pub variance: f64,
    pub z: f64,
    /// `P(Z >= z)`: evidence for a positive effect.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

impl BaselineResult {
    fn from_estimate(method: BaselineMethod, estimate: f64, variance: f64) -> Self {
        let z = if variance > 0.0 {
            estimate / variance.sqrt()
        } else if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(estimate)
        };
        Self::from_z(method, estimate, variance, z)
    }

    fn from_z(method: BaselineMethod, estimate: f64, variance: f64, z: f64) -> Self {
        Self {
            method,
            estimate,
            variance,
            z,
            p_one_sided: normal_cdf(-z).clamp(P_FLOOR, 1.0),
            p_two_sided: (2.0 * normal_cdf(-z.abs())).clamp(P_FLOOR, 1.0),
        }
    }
}

fn split_by_arm(y: &[f64], a: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut control, mut treated) = (Vec::new(), Vec::new());
    for (&v, &arm) in y.iter().zip(a) {
        if arm == 1 {
            treated.push(v);
        } else {
            control.push(v);
        }
    }
    if control.len() < 2 || treated.len() < 2 {
        return Err(Error::domain(format!(
            "each arm needs at least 2 subjects (control {}, treated {})",
            control.len(),
            treated.len()
        )));
    }
    Ok((control, treated))
}

fn dim_on(y: &[f64], a: &[u8], method: BaselineMethod) -> Result<BaselineResult> {
    let (control, treated) = split_by_arm(y, a)?;
    let estimate = stats::mean(&treated) - stats::mean(&control);
    let variance = stats::sample_variance(&treated) / treated.len() as f64
        + stats::sample_variance(&control) / control.len() as f64;
    Ok(BaselineResult::from_estimate(method, estimate, variance))
}

/// Difference in arm means with variance `s1^2/n1 + s0^2/n0`.
pub fn dim_test(data: &Dataset) -> Result<BaselineResult> {
    dim_on(data.y(), data.a(), BaselineMethod::Dim)
}

/// DIM on `Y - theta' (X - mean(X))`, `theta` the pooled least-squares slope of
/// `Y` on the chosen covariate columns (0-based).
pub fn cuped_test(data: &Dataset, covariate_cols: &[usize]) -> Result<BaselineResult> {
    if covariate_cols.is_empty() {
        return Err(Error::domain("CUPED needs at least one covariate column"));
    }
    let x = data.x().select_columns(covariate_cols)?;
    let fit = LinearModel::fit(&x, data.y(), 0.0)?;
    let d = x.ncols();
    let means: Vec<f64> = (0..d).map(|j| stats::mean(&x.column(j))).collect();
    let adjusted: Vec<f64> = (0..data.len())
        .map(|i| {
            let shift: f64 = (0..d)
                .map(|j| fit.coefficients[j] * (x.get(i, j) - means[j]))
                .sum();
            data.y()[i] - shift
        })
        .collect();
    dim_on(&adjusted, data.a(), BaselineMethod::Cuped)
}

/// `z = sum(mu) / (sqrt(n) * sigma_hat)`.
pub fn zdml_test(p: &PseudoOutcomes) -> Result<BaselineResult> {
    if !(p.sigma_hat() > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let n = p.len() as f64;
    let sum: f64 = p.values().iter().sum();
    let z = sum / (n.sqrt() * p.sigma_hat());
    let variance = p.sigma_hat().powi(2) / n;
    Ok(BaselineResult::from_z(BaselineMethod::ZDml, p.mean(), variance, z))
}
