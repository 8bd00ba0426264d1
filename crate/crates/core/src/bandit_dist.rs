//! The bandit (spike) distribution `B(omega, sigma0)`: the limiting law of the
//! weighted two-armed-bandit statistic under the tail-maximising policy.
//!
//! For `omega > 0` the law is bimodal with modes near `+-omega`, for
//! `omega = 0, sigma0 = 1` it is the standard normal, and for `omega < 0` it is
//! more concentrated around zero than the standard normal.
//!
//! All terms of the form `exp(2*omega*|y|/sigma0^2) * Phi(..)` are evaluated as
//! `exp(2*omega*|y|/sigma0^2 + ln Phi(..))` so that large `omega * |y|` neither
//! overflows nor loses the product.

use crate::error::{Error, Result};
pub use crate::normal::{log_normal_cdf, normal_cdf, normal_pdf, normal_quantile, INV_SQRT_2PI};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub omega: f64,
    pub sigma0: f64,
}

impl BanditParams {
    pub fn new(omega: f64, sigma0: f64) -> Result<Self> {
        if !omega.is_finite() || !sigma0.is_finite() || sigma0 <= 0.0 {
            return Err(Error::domain(format!(
                "bandit parameters require finite omega and sigma0 > 0, got ({omega}, {sigma0})"
            )));
        }
        Ok(Self { omega, sigma0 })
    }

    pub fn standard_normal() -> Self {
        Self {
            omega: 0.0,
            sigma0: 1.0,
        }
    }

    /// Limiting parameters for rewards with mean `mu` and standard deviation
    /// `sigma` at sample size `n` and weight `lambda`:
    /// `omega = lambda*mu/(1-lambda) + sqrt(n)*mu/sigma`,
    /// `sigma0 = sqrt(1 + mu^2/sigma^2)`.
    pub fn from_effect(mu: f64, sigma: f64, lambda: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() {
            return Err(Error::domain("effect parameters require finite mu and sigma > 0"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::domain(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        let omega = lambda * mu / (1.0 - lambda) + (n as f64).sqrt() * mu / sigma;
        let sigma0 = (1.0 + (mu / sigma).powi(2)).sqrt();
        Self::new(omega, sigma0)
    }

    /// `exp(2*omega*a/sigma0^2) * Phi(-(a+omega)/sigma0)` for `a >= 0`, in log space.
    fn reflected_term(&self, a: f64) -> f64 {
        let s2 = self.sigma0 * self.sigma0;
        (2.0 * self.omega * a / s2 + log_normal_cdf(-(a + self.omega) / self.sigma0)).exp()
    }
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite, got {x}")))
    }
}

/// Density `f(y) = phi((|y|-omega)/sigma0)/sigma0
///   - (omega/sigma0^2) * exp(2*omega*|y|/sigma0^2) * Phi(-(|y|+omega)/sigma0)`.
pub fn bandit_density(y: f64, params: BanditParams) -> Result<f64> {
    check_finite(y, "y")?;
    let params = BanditParams::new(params.omega, params.sigma0)?;
    let a = y.abs();
    let BanditParams { omega, sigma0 } = params;
    let z = (a - omega) / sigma0;
    let gaussian = INV_SQRT_2PI / sigma0 * (-0.5 * z * z).exp();
    if omega == 0.0 {
        return Ok(gaussian);
    }
    let reflected = omega / (sigma0 * sigma0) * params.reflected_term(a);
    Ok((gaussian - reflected).max(0.0))
}

/// `P(|eta| > z) = Phi((omega - z)/sigma0) + exp(2*omega*z/sigma0^2) * Phi(-(omega + z)/sigma0)`.
pub fn bandit_tail_prob(z: f64, params: BanditParams) -> Result<f64> {
    check_finite(z, "z")?;
    if z < 0.0 {
        return Err(Error::domain(format!("tail threshold must be >= 0, got {z}")));
    }
    let params = BanditParams::new(params.omega, params.sigma0)?;
    if z == 0.0 {
        return Ok(1.0);
    }
    let direct = normal_cdf((params.omega - z) / params.sigma0);
    Ok((direct + params.reflected_term(z)).clamp(0.0, 1.0))
}

/// Distribution function, from the symmetric tail: `P(eta > y) = tail(y)/2` for `y >= 0`.
pub fn bandit_cdf(y: f64, params: BanditParams) -> Result<f64> {
    check_finite(y, "y")?;
    let tail = bandit_tail_prob(y.abs(), params)?;
    Ok(if y >= 0.0 { 1.0 - 0.5 * tail } else { 0.5 * tail })
}

/// Two-sided p-value of an observed statistic under `B(omega, sigma0)`.
/// With `omega = 0, sigma0 = 1` this is exactly `2*Phi(-|t|)`.
pub fn bandit_p_value(t: f64, params: BanditParams) -> Result<f64> {
    check_finite(t, "t")?;
    bandit_tail_prob(t.abs(), params)
}
