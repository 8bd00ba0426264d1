//! Standard normal primitives: density, CDF, log-CDF and quantile.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the log-CDF switches to the asymptotic Mills-ratio series.
const LOG_CDF_ASYMPTOTIC_CUTOFF: f64 = -30.0;

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Phi(x). Stays strictly positive down to about x = -38.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < LOG_CDF_ASYMPTOTIC_CUTOFF {
        return log_normal_cdf(x).exp();
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// ln Phi(x), accurate in the far lower tail where Phi itself underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= LOG_CDF_ASYMPTOTIC_CUTOFF {
        if x > 5.0 {
            // Phi(x) = 1 - Phi(-x); ln_1p keeps the tiny complement.
            return (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p();
        }
        return (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln();
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Phi(x) = phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...)
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..=12 {
        term *= -((2 * k - 1) as f64) * inv_x2;
        series += term;
    }
    -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + series.ln()
}

/// Phi^{-1}(p) for p in (0, 1).
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Halley step against `normal_cdf`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    // Halley refinement; the upper half is refined through the lower tail to
    // avoid cancellation in Phi(x) - p.
    let err = if x <= 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_cdf(-x)
    };
    let u = err * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}
