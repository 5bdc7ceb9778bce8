//! Point estimators of the pseudo-spectral gaps from a single trajectory.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::generic_dilation;
use crate::eigen::{second_eigenvalue, EigenConfig};
use crate::error::{MixError, Result};
use crate::stats::{tally, SkippedTallies};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub eigen: EigenConfig,
    /// Prefix bound used at every level of the amplified scan.
    pub amplified_prefix: usize,
    /// The amplified scan stops at the first level whose estimate exceeds this.
    pub amplified_threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eigen: EigenConfig::default(),
            amplified_prefix: 16,
            amplified_threshold: 0.375,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Skip rates dropped because some state was never left, with those states.
    pub unvisited: BTreeMap<usize, Vec<usize>>,
    /// Skip rates dropped because the skipped trajectory had no transitions.
    pub too_short: Vec<usize>,
    /// The data-driven prefix bound evaluated to 0 and was raised to 1.
    pub k_hat_clamped: bool,
    /// Skip rates whose raw gap fell outside `[0, 1]` and was clipped.
    pub clipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub value: f64,
    /// Prefix bound explored.
    pub k_used: usize,
    /// Per-skip gap estimate before division by `k`. For the amplified
    /// estimator the key is the skip `2^p` and the value its prefix estimate.
    pub per_k_values: BTreeMap<usize, f64>,
    pub k_star: Option<usize>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    fn prefix(name: &str, k_used: usize, per_k: BTreeMap<usize, f64>, diag: Diagnostics) -> Self {
        let value = per_k
            .iter()
            .map(|(&k, &g)| g / k as f64)
            .fold(0.0, f64::max);
        Self {
            estimator: name.into(),
            value,
            k_used,
            per_k_values: per_k,
            k_star: None,
            diagnostics: diag,
        }
    }
}

/// `ceil(x)`, treating values within a relative `1e-9` of an integer as that
/// integer so that e.g. `2 / 0.01` gives exactly 200.
pub fn robust_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// `ceil(x^(1/3))` exact on perfect cubes.
pub fn robust_ceil_cbrt(x: f64) -> usize {
    let c = x.cbrt();
    let r = c.round();
    if (r * r * r - x).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        c.ceil() as usize
    }
}

fn clip(v: f64, k: usize, diag: &mut Diagnostics) -> f64 {
    if !(0.0..=1.0).contains(&v) {
        diag.clipped.push(k);
    }
    v.clamp(0.0, 1.0)
}

/// `pi_star-hat = N_min / (m - 1)` from the one-step tallies; 0 when some
/// state is never left.
pub fn pi_star_hat(tr: &Trajectory) -> Result<f64> {
    tr.require_len(2)?;
    let t = tally(tr, 1)?;
    Ok(t.n_min() as f64 / (tr.len() - 1) as f64)
}

/// `1 - lambda_2(L-hat^T L-hat)` for one skip rate.
fn unsmoothed_gap(t: &SkippedTallies, eigen: &EigenConfig) -> Result<f64> {
    let l = t.unsmoothed_l_hat()?;
    if t.n < 2 {
        return Ok(1.0);
    }
    let gram = l.transpose() * &l;
    let gram = (&gram + gram.transpose()) * 0.5;
    Ok(1.0 - second_eigenvalue(&gram, eigen)?)
}

/// Truncated empirical pseudo-spectral gap `max_{k <= K} gap_k / k`.
///
/// Skip rates with unvisited states or no transitions are dropped and
/// recorded in the diagnostics.
pub fn gamma_ps_prefix_hat(tr: &Trajectory, k_max: usize, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    if k_max == 0 {
        return Err(MixError::InvalidArgument("prefix bound K must be >= 1".into()));
    }
    tr.require_len(2)?;
    let mut diag = Diagnostics::default();
    let mut per_k = BTreeMap::new();
    for k in 1..=k_max {
        if tr.len() < k + 1 {
            diag.too_short.push(k);
            continue;
        }
        let t = tally(tr, k)?;
        match unsmoothed_gap(&t, &cfg.eigen) {
            Ok(g) => {
                per_k.insert(k, clip(g, k, &mut diag));
            }
            Err(MixError::UnvisitedState { states }) => {
                diag.unvisited.insert(k, states);
            }
            Err(e) => return Err(e),
        }
    }
    if per_k.is_empty() {
        return Err(MixError::NoUsableK { max_k: k_max });
    }
    Ok(EstimateReport::prefix("ps-prefix", k_max, per_k, diag))
}

/// Additive-error estimator: the prefix estimator with `K = ceil(2 / epsilon)`.
pub fn gamma_ps_additive(tr: &Trajectory, epsilon: f64, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MixError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let mut r = gamma_ps_prefix_hat(tr, additive_prefix(epsilon), cfg)?;
    r.estimator = "ps-additive".into();
    Ok(r)
}

pub fn additive_prefix(epsilon: f64) -> usize {
    robust_ceil(2.0 / epsilon)
}

/// Index of the first estimate strictly above `threshold`.
pub fn amplified_trigger(estimates: &[f64], threshold: f64) -> Option<usize> {
    estimates.iter().position(|&g| g > threshold)
}

/// Constant-multiplicative-error estimator.
///
/// For `p = 0, 1, ...` runs the prefix estimator on the `2^p`-skipped
/// trajectory and stops at the first estimate above the threshold, returning
/// it divided by `2^p`.
pub fn gamma_ps_amplified(tr: &Trajectory, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    tr.require_len(2)?;
    let mut per_level = BTreeMap::new();
    let mut diag = Diagnostics::default();
    let mut scanned = Vec::new();
    let mut step = 1usize;
    loop {
        let sk = tr.skipped(step)?;
        if sk.len() < 3 {
            return Err(MixError::NoTrigger);
        }
        let est = match gamma_ps_prefix_hat(&sk, cfg.amplified_prefix, cfg) {
            Ok(r) => r.value,
            Err(MixError::NoUsableK { .. }) => {
                diag.unvisited.insert(step, Vec::new());
                0.0
            }
            Err(e) => return Err(e),
        };
        per_level.insert(step, est);
        scanned.push(est);
        if amplified_trigger(&scanned, cfg.amplified_threshold).is_some() {
            return Ok(EstimateReport {
                estimator: "ps-amplified".into(),
                value: est / step as f64,
                k_used: cfg.amplified_prefix,
                per_k_values: per_level,
                k_star: Some(step),
                diagnostics: diag,
            });
        }
        step = step.checked_mul(2).ok_or(MixError::NoTrigger)?;
    }
}

/// Arbitrary-multiplicative-error estimator: the prefix estimator with
/// `K-hat = ceil((N_min / epsilon)^(1/3))`, raised to 1 when it is 0.
pub fn gamma_ps_adaptive_multiplicative(
    tr: &Trajectory,
    epsilon: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    if !(epsilon > 0.0 && epsilon < 5.0) {
        return Err(MixError::InvalidArgument(format!(
            "epsilon must lie in (0, 5), got {epsilon}"
        )));
    }
    tr.require_len(2)?;
    let n_min = tally(tr, 1)?.n_min();
    let (k_hat, clamped) = clamp_k(adaptive_multiplicative_prefix(n_min, epsilon));
    let mut r = gamma_ps_prefix_hat(tr, k_hat, cfg)?;
    r.estimator = "ps-adaptive".into();
    r.diagnostics.k_hat_clamped = clamped;
    Ok(r)
}

/// Unclamped `ceil((N_min / epsilon)^(1/3))`.
pub fn adaptive_multiplicative_prefix(n_min: u64, epsilon: f64) -> usize {
    robust_ceil_cbrt(n_min as f64 / epsilon)
}

/// Unclamped `ceil(N_min^(3/2) / (m ln^(3/2) m))`.
pub fn adaptive_dps_prefix(n_min: u64, m: usize) -> usize {
    let mf = m as f64;
    robust_ceil((n_min as f64).powf(1.5) / (mf * mf.ln().powf(1.5)))
}

fn clamp_k(k: usize) -> (usize, bool) {
    if k == 0 {
        (1, true)
    } else {
        (k, false)
    }
}

/// `gamma_ddagger` of the smoothed empirical matrix of one skip rate:
/// `2 - lambda_2(S(L-hat) + I)`.
pub fn smoothed_dilation_gap(t: &SkippedTallies, alpha: f64, eigen: &EigenConfig) -> Result<f64> {
    let l = t.smoothed(alpha)?.l_hat;
    let d = generic_dilation(&l)?.into_matrix();
    let shifted = &d + DMatrix::identity(d.nrows(), d.ncols());
    Ok(2.0 - second_eigenvalue(&shifted, eigen)?)
}

/// Tallies of the `k`-skipped chain; an empty tally when the trajectory is
/// too short to hold a single `k`-step pair.
pub(crate) fn tally_or_empty(tr: &Trajectory, k: usize) -> Result<SkippedTallies> {
    if tr.len() < k + 1 {
        SkippedTallies::from_counts(k, tr.len(), &DMatrix::zeros(tr.n(), tr.n()))
    } else {
        tally(tr, k)
    }
}

/// Smoothed dilation plug-in `max_{k <= K} gamma_ddagger(P-hat^(k)) / k`.
///
/// Without an explicit `K` the prefix is `ceil(N_min^(3/2) / (m ln^(3/2) m))`
/// (natural log), raised to 1 when it is 0.
pub fn gamma_dps_hat(
    tr: &Trajectory,
    alpha: f64,
    k_max: Option<usize>,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    tr.require_len(3)?;
    let (k_used, clamped) = match k_max {
        Some(0) => return Err(MixError::InvalidArgument("prefix bound K must be >= 1".into())),
        Some(k) => (k, false),
        None => clamp_k(adaptive_dps_prefix(tally(tr, 1)?.n_min(), tr.len())),
    };
    let tallies = (1..=k_used)
        .map(|k| tally_or_empty(tr, k))
        .collect::<Result<Vec<_>>>()?;
    let mut r = gamma_dps_from_tallies(&tallies, alpha, cfg)?;
    r.diagnostics.k_hat_clamped = clamped;
    Ok(r)
}

/// The smoothed dilation plug-in evaluated on precomputed tallies, one per
/// skip rate (the skip rate is read from each tally).
pub fn gamma_dps_from_tallies(
    tallies: &[SkippedTallies],
    alpha: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    if tallies.is_empty() {
        return Err(MixError::InvalidArgument("no tallies supplied".into()));
    }
    let mut diag = Diagnostics::default();
    let mut per_k = BTreeMap::new();
    for t in tallies {
        if t.pairs() == 0 {
            diag.too_short.push(t.k);
        }
        let g = smoothed_dilation_gap(t, alpha, &cfg.eigen)?;
        per_k.insert(t.k, clip(g, t.k, &mut diag));
    }
    let k_used = tallies.iter().map(|t| t.k).max().unwrap_or(1);
    Ok(EstimateReport::prefix("dps", k_used, per_k, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{simulate, Start};
    use crate::eigen::dense_symmetric_spectrum;
    use crate::fixtures;
    use crate::oracle::pseudo_spectral_gap;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default()
    }

    fn tr(states: &[usize]) -> Trajectory {
        Trajectory::from_states(states.to_vec())
    }

    #[test]
    fn pi_star_hat_examples() {
        assert_abs_diff_eq!(pi_star_hat(&tr(&[0, 1, 0, 1, 1])).unwrap(), 0.5);
        assert_eq!(pi_star_hat(&Trajectory::new(vec![0; 10], 2).unwrap()).unwrap(), 0.0);
        assert!(matches!(
            pi_star_hat(&tr(&[0])),
            Err(MixError::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn prefix_on_small_trajectory() {
        let r = gamma_ps_prefix_hat(&tr(&[0, 1, 0, 1, 1]), 1, &cfg()).unwrap();
        // L-hat = [[0, 1], [1/2, 1/2]]; L-hat^T L-hat = [[1/4, 1/4], [1/4, 5/4]].
        let gram = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.25, 1.25]);
        let expected = 1.0 - dense_symmetric_spectrum(&gram).unwrap()[1];
        assert_abs_diff_eq!(r.value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_k_values[&1], expected, epsilon = 1e-12);
    }

    #[test]
    fn prefix_on_periodic_data_is_zero() {
        let r = gamma_ps_prefix_hat(&tr(&[0, 1, 0, 1, 0, 1, 0]), 1, &cfg()).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prefix_flags_unvisited_skips() {
        // With k = 2 the skipped chain stays at state 0.
        let r = gamma_ps_prefix_hat(&tr(&[0, 1, 0, 1, 0, 1, 0]), 2, &cfg()).unwrap();
        assert_eq!(r.diagnostics.unvisited[&2], vec![1]);
        assert_eq!(r.per_k_values.len(), 1);
        let constant = Trajectory::new(vec![0; 6], 2).unwrap();
        assert_eq!(
            gamma_ps_prefix_hat(&constant, 3, &cfg()).unwrap_err(),
            MixError::NoUsableK { max_k: 3 }
        );
    }

    #[test]
    fn additive_prefix_values() {
        assert_eq!(additive_prefix(0.5), 4);
        assert_eq!(additive_prefix(0.01), 200);
        assert_eq!(additive_prefix(0.3), 7);
        assert!(gamma_ps_additive(&tr(&[0, 1, 0]), 1.0, &cfg()).is_err());
    }

    #[test]
    fn adaptive_prefix_values() {
        assert_eq!(adaptive_multiplicative_prefix(100, 0.1), 10);
        assert_eq!(adaptive_multiplicative_prefix(0, 0.1), 0);
        assert_eq!(adaptive_dps_prefix(100, 1000), 1);
        let constant = Trajectory::new(vec![0; 6], 2).unwrap();
        let r = gamma_dps_hat(&constant, 0.1, None, &cfg()).unwrap();
        assert!(r.diagnostics.k_hat_clamped);
        assert_eq!(r.k_used, 1);
    }

    #[test]
    fn adaptive_multiplicative_clamps() {
        let t = Trajectory::new(vec![0, 0, 0, 0, 1], 2).unwrap();
        // N_min = 0 so K-hat = 1, and k = 1 leaves state 1 unvisited.
        assert_eq!(
            gamma_ps_adaptive_multiplicative(&t, 0.1, &cfg()).unwrap_err(),
            MixError::NoUsableK { max_k: 1 }
        );
        let t = tr(&[0, 1, 0, 1, 1, 0]);
        let r = gamma_ps_adaptive_multiplicative(&t, 2.0, &cfg()).unwrap();
        assert!(!r.diagnostics.k_hat_clamped);
        assert_eq!(r.k_used, 1);
    }

    #[test]
    fn dps_on_small_trajectory_matches_explicit_dilation() {
        let r = gamma_dps_hat(&tr(&[0, 1, 0, 1, 1]), 0.1, Some(1), &cfg()).unwrap();
        // N = [[0, 2], [1, 1]], r = N_x + 2a = (2.2, 2.2).
        let l = DMatrix::from_row_slice(2, 2, &[0.1 / 2.2, 2.1 / 2.2, 1.1 / 2.2, 1.1 / 2.2]);
        let mut s = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                s[(i, 2 + j)] = l[(i, j)];
                s[(2 + j, i)] = l[(i, j)];
            }
        }
        let expected = 1.0 - dense_symmetric_spectrum(&s).unwrap()[1];
        assert_abs_diff_eq!(r.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn dps_requires_three_states() {
        assert!(matches!(
            gamma_dps_hat(&tr(&[0, 1]), 0.1, None, &cfg()),
            Err(MixError::TrajectoryTooShort { needed: 3, .. })
        ));
        assert!(gamma_dps_hat(&tr(&[0, 1, 0]), 0.0, None, &cfg()).is_err());
    }

    #[test]
    fn dps_fixed_point_consistency() {
        // Counts proportional to pi(x) P^k(x, x') make P-hat = P^k as alpha -> 0.
        let alpha = 1e-12;
        let scale = 1e12;
        for p in [fixtures::skewed_cycle(), fixtures::random_ergodic_chain(5, 0.5, 3)] {
            let n = p.n();
            let pi = p.stationary().unwrap().to_vec();
            let report = pseudo_spectral_gap(&p).unwrap();
            for k_max in 1..=4 {
                let tallies: Vec<_> = (1..=k_max)
                    .map(|k| {
                        let pk = p.power(k).unwrap();
                        let counts = DMatrix::from_fn(n, n, |x, y| {
                            (scale * pi[x] * pk.get(x, y)).round() as u64
                        });
                        let total: u64 = counts.iter().sum();
                        SkippedTallies::from_counts(k, k * total as usize + 1, &counts).unwrap()
                    })
                    .collect();
                let r = gamma_dps_from_tallies(&tallies, alpha, &cfg()).unwrap();
                assert_abs_diff_eq!(r.value, report.gamma_dps_prefix(k_max), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn amplified_on_rank_one_chain() {
        let p = crate::StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let t = simulate(&p, 10_000, &Start::State(0), 1).unwrap();
        let r = gamma_ps_amplified(&t, &cfg()).unwrap();
        assert_eq!(r.k_star, Some(1));
        assert!((r.value - 1.0).abs() < 0.05, "{}", r.value);
    }

    #[test]
    fn amplified_without_enough_data() {
        let p = fixtures::random_reversible_chain(4, 0);
        let slow = crate::StochasticMatrix::from_rows(&[
            vec![0.999, 0.001],
            vec![0.001, 0.999],
        ])
        .unwrap();
        let t = simulate(&slow, 20, &Start::State(0), 2).unwrap();
        assert_eq!(gamma_ps_amplified(&t, &cfg()).unwrap_err(), MixError::NoTrigger);
        assert!(p.is_ergodic());
    }

    #[test]
    fn amplified_trigger_is_first_exceedance() {
        assert_eq!(amplified_trigger(&[0.1, 0.375, 0.4, 0.9], 0.375), Some(2));
        assert_eq!(amplified_trigger(&[0.1, 0.2], 0.375), None);
        let replay = [0.05, 0.2, 0.5, 0.6];
        assert_eq!(amplified_trigger(&replay, 0.375), amplified_trigger(&replay, 0.375));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prefix_is_monotone_in_k(seed in 0u64..1000, m in 20usize..400) {
            let p = fixtures::random_ergodic_chain(3, 0.7, seed);
            let t = simulate(&p, m, &Start::State(0), seed).unwrap();
            let mut last = 0.0;
            for k in 1..=6 {
                match gamma_ps_prefix_hat(&t, k, &cfg()) {
                    Ok(r) => {
                        prop_assert!(r.value >= last);
                        prop_assert!((0.0..=1.0).contains(&r.value));
                        last = r.value;
                    }
                    Err(MixError::NoUsableK { .. }) => prop_assert_eq!(last, 0.0),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }

        #[test]
        fn estimators_stay_in_unit_interval(seed in 0u64..1000, m in 3usize..300, alpha in 0.01f64..2.0) {
            let p = fixtures::random_ergodic_chain(4, 0.5, seed);
            let t = simulate(&p, m, &Start::Stationary, seed).unwrap();
            let r = gamma_dps_hat(&t, alpha, Some(4), &cfg()).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.value));
            prop_assert!((0.0..=1.0).contains(&pi_star_hat(&t).unwrap()));
        }
    }
}
