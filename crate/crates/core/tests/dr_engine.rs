use bandit_ab::dgp::{self, outcome_mean, DgpConfig, FKind, GKind};
use bandit_ab::dr_engine::{
    ate_point_estimate, cross_fit, dr_pseudo_outcomes, NuisanceFits, NuisanceSource, Propensity,
    DEFAULT_CLIP_EPS,
};
use bandit_ab::learners::LearnerSpec;
use bandit_ab::stats::{ks_uniform_test, mean, sample_variance};
use bandit_ab::{baselines, Dataset};

fn oracle_means(cfg: &DgpConfig, data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    (0..data.len())
        .map(|i| {
            let r = data.x().row(i);
            (outcome_mean(cfg, r[0], r[1], 0), outcome_mean(cfg, r[0], r[1], 1))
        })
        .unzip()
}

/// Mean DR estimate over `reps` datasets and its Monte Carlo standard error.
fn dr_bias(reps: u64, make: impl Fn(&DgpConfig, &Dataset) -> NuisanceFits) -> (f64, f64) {
    let estimates: Vec<f64> = (0..reps)
        .map(|r| {
            let cfg = DgpConfig::new(FKind::II, GKind::II, 0.5, 2000, 100 + r);
            let data = dgp::generate(&cfg).unwrap();
            let fits = make(&cfg, &data);
            ate_point_estimate(&dr_pseudo_outcomes(&data, &fits).unwrap())
        })
        .collect();
    (mean(&estimates), (sample_variance(&estimates) / reps as f64).sqrt())
}

#[test]
fn either_correct_nuisance_suffices() {
    let n = 2000;
    let (bias, se) = dr_bias(60, |_, _| {
        NuisanceFits::new(vec![0.0; n], vec![0.0; n], vec![0.5; n], DEFAULT_CLIP_EPS).unwrap()
    });
    assert!(bias.abs() <= 4.0 * se, "wrong m, right e: {bias} (se {se})");
    let (bias, se) = dr_bias(60, |cfg, data| {
        let (m0, m1) = oracle_means(cfg, data);
        NuisanceFits::new(m0, m1, vec![0.3; n], DEFAULT_CLIP_EPS).unwrap()
    });
    assert!(bias.abs() <= 4.0 * se, "right m, wrong e: {bias} (se {se})");
}

#[test]
fn out_of_fold_purity_and_clipping() {
    let data = dgp::generate(&DgpConfig::new(FKind::III, GKind::I, 0.5, 600, 4)).unwrap();
    for k in [2, 3, 5] {
        let source = NuisanceSource {
            learner: LearnerSpec::gbt_b(),
            k,
            propensity: Propensity::Fit,
        };
        let fits = cross_fit(&data, &source, 0.05, 8).unwrap();
        assert_eq!(fits.fold_train_rows.len(), k);
        for (i, &f) in fits.fold_of.iter().enumerate() {
            assert!(!fits.fold_train_rows[f].contains(&i), "row {i} leaked into fold {f}");
        }
        assert!(fits.e_hat.iter().all(|&e| (0.05..=0.95).contains(&e)));
    }
}

#[test]
fn cross_fit_is_reproducible() {
    let data = dgp::generate(&DgpConfig::new(FKind::II, GKind::IV, 0.6, 400, 2)).unwrap();
    let source = NuisanceSource {
        learner: LearnerSpec::stacking(),
        k: 2,
        propensity: Propensity::Fit,
    };
    let a = cross_fit(&data, &source, DEFAULT_CLIP_EPS, 77).unwrap();
    let b = cross_fit(&data, &source, DEFAULT_CLIP_EPS, 77).unwrap();
    assert_eq!(a, b);
}

#[test]
fn null_estimate_is_small_at_large_n() {
    let data = dgp::generate(&DgpConfig::new(FKind::I, GKind::I, 0.5, 20_000, 9)).unwrap();
    let source = NuisanceSource {
        learner: LearnerSpec::linear(),
        ..NuisanceSource::default()
    };
    let fits = cross_fit(&data, &source, DEFAULT_CLIP_EPS, 1).unwrap();
    let p = dr_pseudo_outcomes(&data, &fits).unwrap();
    assert!(ate_point_estimate(&p).abs() <= 3.0 * p.sigma_hat() / (p.len() as f64).sqrt());
}

#[test]
fn null_z_p_values_look_uniform() {
    let source = NuisanceSource {
        learner: LearnerSpec::linear(),
        ..NuisanceSource::default()
    };
    let p_values: Vec<f64> = (0..200)
        .map(|r| {
            let data = dgp::generate(&DgpConfig::new(FKind::I, GKind::I, 0.5, 1000, 500 + r)).unwrap();
            let fits = cross_fit(&data, &source, DEFAULT_CLIP_EPS, r).unwrap();
            baselines::zdml_test(&dr_pseudo_outcomes(&data, &fits).unwrap())
                .unwrap()
                .p_two_sided
        })
        .collect();
    let (_, p) = ks_uniform_test(&p_values).unwrap();
    assert!(p > 0.01, "KS p-value {p}");
}
