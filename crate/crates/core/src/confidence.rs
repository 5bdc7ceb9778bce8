//! Fully empirical confidence intervals for the dilated pseudo-spectral gap.
//!
//! For each skip rate `k <= K-hat` four terms are computed from the tallies:
//! a total-variation width `W`, its stationary rescaling `V`, a perturbation
//! term `T` driven by the pseudo-spectral gap of the smoothed empirical matrix,
//! and `U`, which blows up once `T` reaches a smoothed visit frequency. The
//! half-width is `1/K-hat + max_k (V + U (2 + U)) / k`. An infinite `U` makes
//! the interval vacuous: `[0, 1]` with a flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use crate::oracle::gamma_diagnostic;

use crate::chain::StochasticMatrix;
use crate::error::{MixError, Result};
use crate::estimators::{gamma_dps_hat, tally_or_empty, EstimatorConfig};
use crate::oracle::{gap_profile, OracleConfig};
use crate::stats::SkippedTallies;
use crate::trajectory::Trajectory;

/// Default constant in `T`.
pub const DEFAULT_C: f64 = 48.0;
/// `gamma_ps` of the smoothed matrix at or below this is treated as zero.
pub const DEGENERATE_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub c: f64,
    pub estimator: EstimatorConfig,
    pub oracle: OracleConfig,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            estimator: EstimatorConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

/// Per-skip terms. Infinite values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KTerms {
    pub w: f64,
    pub v: f64,
    pub t: f64,
    pub u: f64,
    /// `None` when the smoothed matrix had a numerically zero gap.
    pub gamma_ps_smoothed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceReport {
    pub point: f64,
    pub half_width: f64,
    pub interval: (f64, f64),
    pub vacuous: bool,
    pub per_k_terms: BTreeMap<usize, KTerms>,
    pub delta_hat: f64,
    pub k_hat: usize,
    pub alpha: f64,
    pub delta: f64,
    pub m: usize,
    pub c: f64,
    /// Skip rates whose smoothed matrix had a numerically zero gap.
    pub degenerate_k: Vec<usize>,
}

fn smoothing_mass(t: &SkippedTallies, alpha: f64) -> f64 {
    alpha * t.n as f64
}

/// `W = 2 max_x (sum_x' sqrt(N_xx') + 3 sqrt(N_x / 2) sqrt(log(2 pairs n / delta)) + a n) / (N_x + a n)`.
pub fn term_w(t: &SkippedTallies, alpha: f64, delta: f64) -> f64 {
    let an = smoothing_mass(t, alpha);
    let log_term = (2.0 * t.pairs() as f64 * t.n as f64 / delta).ln().max(0.0);
    let mut root_sums = vec![0.0; t.n];
    for &(x, _, c) in &t.transitions {
        root_sums[x] += (c as f64).sqrt();
    }
    let worst = (0..t.n)
        .map(|x| {
            let nx = t.visits[x] as f64;
            (root_sums[x] + 3.0 * (nx / 2.0).sqrt() * log_term.sqrt() + an) / (nx + an)
        })
        .fold(0.0, f64::max);
    2.0 * worst
}

/// `V = sqrt(n) (N_max + a n) / (N_min + a n) W`.
pub fn term_v(t: &SkippedTallies, alpha: f64, w: f64) -> f64 {
    let an = smoothing_mass(t, alpha);
    (t.n as f64).sqrt() * (t.n_max() as f64 + an) / (t.n_min() as f64 + an) * w
}

/// `T = c / gamma_ps(P-hat) log(2 sqrt(2 (pairs + a n^2) / (N_min + a n))) W`.
pub fn term_t(t: &SkippedTallies, alpha: f64, w: f64, gamma_ps_smoothed: f64, c: f64) -> Result<f64> {
    if gamma_ps_smoothed <= DEGENERATE_GAP_TOL {
        return Err(MixError::DegenerateEmpiricalGap {
            gap: gamma_ps_smoothed,
        });
    }
    let an = smoothing_mass(t, alpha);
    let total = t.pairs() as f64 + an * t.n as f64;
    let ratio = 2.0 * total / (t.n_min() as f64 + an);
    Ok(c / gamma_ps_smoothed * (2.0 * ratio.sqrt()).ln() * w)
}

/// Smoothed visit frequencies `(N_x + a n) / (pairs + a n^2)`.
pub fn smoothed_frequencies(t: &SkippedTallies, alpha: f64) -> Vec<f64> {
    let an = smoothing_mass(t, alpha);
    let total = t.pairs() as f64 + an * t.n as f64;
    t.visits.iter().map(|&v| (v as f64 + an) / total).collect()
}

/// `U = 1/2 max_x max(T / f_x, T / [f_x - T]_+)`; infinite once some
/// `f_x <= T` with `T > 0`.
pub fn term_u_from_frequencies(freqs: &[f64], t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let worst = freqs
        .iter()
        .map(|&f| {
            let gap = f - t;
            let second = if gap > 0.0 { t / gap } else { f64::INFINITY };
            (t / f).max(second)
        })
        .fold(0.0, f64::max);
    0.5 * worst
}

pub fn term_u(t: &SkippedTallies, alpha: f64, t_term: f64) -> f64 {
    term_u_from_frequencies(&smoothed_frequencies(t, alpha), t_term)
}

/// `delta-hat = sqrt(log^3 m / m) delta / (K-hat n)`.
pub fn delta_hat(m: usize, delta: f64, k_hat: usize, n: usize) -> f64 {
    let mf = m as f64;
    (mf.ln().powi(3) / mf).sqrt() * delta / (k_hat as f64 * n as f64)
}

/// Pseudo-spectral gap of the smoothed empirical matrix of one skip rate.
pub fn smoothed_gamma_ps(t: &SkippedTallies, alpha: f64, oracle: &OracleConfig) -> Result<f64> {
    let p_hat = StochasticMatrix::new(t.smoothed(alpha)?.p_hat)?;
    match gap_profile(&p_hat, oracle) {
        Ok(r) => Ok(r.gamma_ps),
        Err(MixError::NonConvergent { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// All four terms for one skip rate at confidence level `delta`.
pub fn k_terms(t: &SkippedTallies, alpha: f64, delta: f64, cfg: &ConfidenceConfig) -> Result<KTerms> {
    let w = term_w(t, alpha, delta);
    let v = term_v(t, alpha, w);
    let g = smoothed_gamma_ps(t, alpha, &cfg.oracle)?;
    Ok(match term_t(t, alpha, w, g, cfg.c) {
        Ok(tt) => KTerms {
            w,
            v,
            t: tt,
            u: term_u(t, alpha, tt),
            gamma_ps_smoothed: Some(g),
        },
        Err(MixError::DegenerateEmpiricalGap { .. }) => KTerms {
            w,
            v,
            t: f64::INFINITY,
            u: f64::INFINITY,
            gamma_ps_smoothed: None,
        },
        Err(e) => return Err(e),
    })
}

/// Empirical confidence interval around the smoothed dilation plug-in with
/// the data-driven prefix `K-hat`.
pub fn confidence_interval(
    tr: &Trajectory,
    alpha: f64,
    delta: f64,
    cfg: &ConfidenceConfig,
) -> Result<ConfidenceReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MixError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(MixError::InvalidArgument(format!("c must be positive, got {}", cfg.c)));
    }
    let point = gamma_dps_hat(tr, alpha, None, &cfg.estimator)?;
    let k_hat = point.k_used;
    let m = tr.len();
    let d_hat = delta_hat(m, delta, k_hat, tr.n());
    let mut per_k = BTreeMap::new();
    let mut degenerate_k = Vec::new();
    let mut excess = 0.0f64;
    for k in 1..=k_hat {
        let t = tally_or_empty(tr, k)?;
        let terms = k_terms(&t, alpha, d_hat, cfg)?;
        if terms.gamma_ps_smoothed.is_none() {
            degenerate_k.push(k);
        }
        excess = excess.max((terms.v + terms.u * (2.0 + terms.u)) / k as f64);
        per_k.insert(k, terms);
    }
    let half_width = 1.0 / k_hat as f64 + excess;
    let vacuous = !half_width.is_finite();
    let interval = if vacuous {
        (0.0, 1.0)
    } else {
        ((point.value - half_width).max(0.0), (point.value + half_width).min(1.0))
    };
    Ok(ConfidenceReport {
        point: point.value,
        half_width,
        interval,
        vacuous,
        per_k_terms: per_k,
        delta_hat: d_hat,
        k_hat,
        alpha,
        delta,
        m,
        c: cfg.c,
        degenerate_k,
    })
}
