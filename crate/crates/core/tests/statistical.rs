//! Seeded Monte Carlo checks of the estimators and the interval terms.

use mixgap::confidence::{confidence_interval, k_terms, ConfidenceConfig, DEFAULT_C};
use mixgap::estimators::{gamma_dps_hat, gamma_ps_prefix_hat, EstimatorConfig};
use mixgap::fixtures::{by_name, random_reversible_chain, skewed_cycle};
use mixgap::oracle::{absolute_spectral_gap, gap_profile, OracleConfig};
use mixgap::{simulate, tally, Start, StochasticMatrix, Trajectory};

fn run(p: &StochasticMatrix, m: usize, seed: u64) -> Trajectory {
    simulate(p, m, &Start::Stationary, seed).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn prefix_estimator_tracks_the_skewed_cycle() {
    let p = skewed_cycle();
    let truth = gap_profile(&p, &OracleConfig::default()).unwrap().gamma_ps_prefix(10);
    let cfg = EstimatorConfig::default();
    let est: Vec<f64> = (0..20)
        .map(|s| gamma_ps_prefix_hat(&run(&p, 100_000, s), 10, &cfg).unwrap().value)
        .collect();
    assert!((mean(&est) - truth).abs() <= 0.05, "{} vs {truth}", mean(&est));
}

#[test]
fn dilation_estimator_recovers_reversible_gap() {
    let p = random_reversible_chain(4, 17);
    let star = absolute_spectral_gap(&p).unwrap();
    let cfg = EstimatorConfig::default();
    let est: Vec<f64> = (0..10)
        .map(|s| gamma_dps_hat(&run(&p, 100_000, s), 1e-3, Some(3), &cfg).unwrap().value)
        .collect();
    assert!((mean(&est) - star).abs() <= 0.05, "{} vs {star}", mean(&est));
}

#[test]
fn empirical_gaps_keep_their_order() {
    let cfg = EstimatorConfig::default();
    for name in ["fast3", "random5a"] {
        let p = by_name(name).unwrap();
        for s in 0..5 {
            let tr = run(&p, 50_000, s);
            let ps = gamma_ps_prefix_hat(&tr, 4, &cfg).unwrap().value;
            let dps = gamma_dps_hat(&tr, 1e-6, Some(4), &cfg).unwrap().value;
            assert!(dps <= ps + 0.05, "{name}: dps {dps} ps {ps}");
            assert!(ps <= 2.0 * dps + 0.05, "{name}: dps {dps} ps {ps}");
        }
    }
}

#[test]
fn finite_terms_shrink_with_length() {
    let p = by_name("fast3").unwrap();
    let cfg = ConfidenceConfig::default();
    let terms = |m: usize| {
        let t = tally(&run(&p, m, 5), 1).unwrap();
        k_terms(&t, 1e-2, 0.05, &cfg).unwrap()
    };
    let (small, large) = (terms(10_000), terms(100_000));
    assert!(large.w < small.w);
    assert!(large.v < small.v);
    assert!(large.t < small.t);
}

#[test]
fn half_width_shrinks_under_a_small_constant() {
    let p = by_name("fast3").unwrap();
    let cfg = ConfidenceConfig { c: 0.01, ..ConfidenceConfig::default() };
    let width = |m: usize| {
        let w: Vec<f64> = (0..5)
            .map(|s| confidence_interval(&run(&p, m, s), 1e-2, 0.05, &cfg).unwrap().half_width)
            .collect();
        mean(&w)
    };
    let (a, b) = (width(10_000), width(100_000));
    assert!(a.is_finite() && b < a, "{a} -> {b}");
}

#[test]
fn default_constant_is_vacuous_at_moderate_lengths() {
    let p = by_name("fast3").unwrap();
    let cfg = ConfidenceConfig::default();
    assert_eq!(cfg.c, DEFAULT_C);
    let ci = confidence_interval(&run(&p, 100_000, 1), 1e-2, 0.05, &cfg).unwrap();
    assert!(ci.vacuous);
    assert_eq!(ci.interval, (0.0, 1.0));
}
