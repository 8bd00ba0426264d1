mod common;

use bandit_ab::bandit_dist::{
    bandit_cdf, bandit_density, bandit_p_value, bandit_tail_prob, normal_cdf, normal_pdf,
    BanditParams,
};
use common::{integrate, naive_density, window};
use proptest::prelude::*;

const OMEGAS: [f64; 5] = [-5.0, -1.0, 0.0, 1.0, 5.0];
const SIGMAS: [f64; 3] = [1.0, 1.5, 3.0];

fn params(omega: f64, sigma0: f64) -> BanditParams {
    BanditParams::new(omega, sigma0).unwrap()
}

#[test]
fn density_integrates_to_one_on_the_grid() {
    for &w in &OMEGAS {
        for &s in &SIGMAS {
            let p = params(w, s);
            let r = window(w, s);
            let mass = integrate(|y| bandit_density(y, p).unwrap(), -r, r, 1e-11);
            assert!((mass - 1.0).abs() < 1e-6, "omega {w} sigma0 {s}: mass {mass}");
        }
    }
}

#[test]
fn tail_matches_quadrature_on_the_grid() {
    for &w in &OMEGAS {
        for &s in &SIGMAS {
            let p = params(w, s);
            let r = window(w, s);
            for z in [0.25, 1.0, 1.96, 3.0, 6.0] {
                let upper = integrate(|y| bandit_density(y, p).unwrap(), z, r.max(z) + 1.0, 1e-12);
                let quad = 2.0 * upper;
                let closed = bandit_tail_prob(z, p).unwrap();
                assert!((quad - closed).abs() < 1e-6, "omega {w} sigma0 {s} z {z}: {quad} vs {closed}");
            }
        }
    }
}

#[test]
fn cdf_matches_quadrature() {
    for &w in &[-1.0, 0.5, 2.0] {
        for &s in &SIGMAS {
            let p = params(w, s);
            let r = window(w, s);
            for y in [-4.0, -1.0, 0.0, 0.7, 3.0] {
                let quad = integrate(|t| bandit_density(t, p).unwrap(), -r, y, 1e-12);
                assert!((quad - bandit_cdf(y, p).unwrap()).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn closed_form_matches_the_naive_formula() {
    for &w in &OMEGAS {
        for &s in &SIGMAS {
            for y in [-7.0, -2.5, -0.3, 0.0, 0.4, 1.0, 3.3, 8.0] {
                let fast = bandit_density(y, params(w, s)).unwrap();
                let naive = naive_density(y, w, s).max(0.0);
                assert!((fast - naive).abs() < 1e-12, "omega {w} sigma0 {s} y {y}");
            }
        }
    }
}

#[test]
fn zero_omega_unit_scale_is_standard_normal() {
    let p = BanditParams::standard_normal();
    for i in -80..=80 {
        let y = i as f64 * 0.1;
        assert!((bandit_density(y, p).unwrap() - normal_pdf(y)).abs() < 1e-12);
        assert!((bandit_cdf(y, p).unwrap() - normal_cdf(y)).abs() < 1e-12);
    }
}

#[test]
fn tail_examples() {
    let sn = BanditParams::standard_normal();
    assert!((bandit_tail_prob(1.959_963_984_540_054, sn).unwrap() - 0.05).abs() < 1e-12);
    // Limiting rejection rate for mu=0.02, sigma=1, lambda=0.75, n=2000.
    let p = BanditParams::from_effect(0.02, 1.0, 0.75, 2000).unwrap();
    let expected = common::phi_cdf((p.omega - 1.96) / p.sigma0)
        + (2.0 * p.omega * 1.96 / (p.sigma0 * p.sigma0)).exp()
            * common::phi_cdf(-(p.omega + 1.96) / p.sigma0);
    assert!((bandit_tail_prob(1.96, p).unwrap() - expected).abs() < 1e-12);
}

proptest! {
    #[test]
    fn density_is_even_and_non_negative(w in -6.0f64..6.0, s in 0.5f64..4.0, y in -20.0f64..20.0) {
        let p = params(w, s);
        let a = bandit_density(y, p).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, bandit_density(-y, p).unwrap());
    }

    #[test]
    fn cdf_is_monotone_and_symmetric(w in -6.0f64..6.0, s in 0.5f64..4.0, y in 0.0f64..15.0, dy in 0.0f64..2.0) {
        let p = params(w, s);
        let lo = bandit_cdf(y, p).unwrap();
        let hi = bandit_cdf(y + dy, p).unwrap();
        prop_assert!(hi + 1e-15 >= lo);
        prop_assert!((bandit_cdf(-y, p).unwrap() - (1.0 - lo)).abs() < 1e-12);
    }

    #[test]
    fn p_value_is_the_tail_at_abs_t(w in -3.0f64..3.0, s in 0.5f64..3.0, t in -10.0f64..10.0) {
        let p = params(w, s);
        let pv = bandit_p_value(t, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&pv));
        prop_assert_eq!(pv, bandit_tail_prob(t.abs(), p).unwrap());
    }
}
