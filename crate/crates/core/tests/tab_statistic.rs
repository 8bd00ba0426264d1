use bandit_ab::harness::sclt::{run_sclt_check, simulate_statistics};
use bandit_ab::rng::{derived_rng, rng_from_seed};
use bandit_ab::tab_statistic::{evaluate_policy, run_optimal_policy, RewardSequence};
use rand::Rng;
use rand_distr::StandardNormal;

const Z: f64 = 1.959_963_984_540_054;

/// Rejection rates of the optimal, all-ones and 20 fixed random policies on
/// the same reward draws.
#[test]
fn optimal_policy_maximises_the_tail() {
    let (n, reps, mu, lambda) = (400, 2000, 0.08, 0.5);
    let mut policy_rng = rng_from_seed(99);
    let random: Vec<Vec<u8>> = (0..20)
        .map(|_| (0..n).map(|_| policy_rng.random_range(0..2u8)).collect())
        .collect();
    let mut optimal = 0usize;
    let mut ones = 0usize;
    let mut others = vec![0usize; random.len()];
    for r in 0..reps {
        let mut rng = derived_rng(7, &[r]);
        let v: Vec<f64> = (0..n).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect();
        let seq = RewardSequence::new(v).unwrap();
        if run_optimal_policy(&seq, lambda, r).unwrap().statistic().abs() > Z {
            optimal += 1;
        }
        if evaluate_policy(&seq, lambda, &vec![1; n]).unwrap().abs() > Z {
            ones += 1;
        }
        for (k, p) in random.iter().enumerate() {
            if evaluate_policy(&seq, lambda, p).unwrap().abs() > Z {
                others[k] += 1;
            }
        }
    }
    let rate = |c: usize| c as f64 / reps as f64;
    let se = |a: f64, b: f64| ((a * (1.0 - a) + b * (1.0 - b)) / reps as f64).sqrt();
    let opt = rate(optimal);
    for c in std::iter::once(ones).chain(others) {
        assert!(opt >= rate(c) - 2.0 * se(opt, rate(c)), "{opt} vs {}", rate(c));
    }
}

#[test]
fn limiting_law_at_reduced_replications() {
    let report = run_sclt_check(0.0, 1.0, 0.5, 2000, 3000, 4).unwrap();
    assert!(report.assertable);
    assert_eq!(report.omega, 0.0);
    assert!(report.ks_distance < 0.035, "{}", report.ks_distance);
}

#[test]
fn theoretical_parameters_are_reported() {
    let report = run_sclt_check(0.02, 1.0, 0.5, 2000, 10, 0).unwrap();
    assert!((report.omega - 0.914_427).abs() < 1e-6);
    assert!((report.sigma0 - 1.0002).abs() < 1e-4);
}

#[test]
fn huge_noise_is_flagged_as_not_assertable() {
    let report = run_sclt_check(0.1, 1e6, 0.5, 50, 200, 1).unwrap();
    assert!(!report.assertable);
}

#[test]
fn statistics_are_reproducible() {
    assert_eq!(
        simulate_statistics(0.01, 1.0, 0.3, 100, 50, 9).unwrap(),
        simulate_statistics(0.01, 1.0, 0.3, 100, 50, 9).unwrap()
    );
}
