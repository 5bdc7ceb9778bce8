//! Exact spectral quantities of a known transition matrix.
//!
//! Everything here is computed from dense eigendecompositions and serves as
//! ground truth for the estimators. The central object is the second singular
//! value `s_k` of `L^k`: it gives `gamma_ddagger(P^k) = 1 - s_k` and
//! `gamma_dagger(P^k) = 1 - s_k^2`, and the pseudo-spectral gaps are maxima of
//! those over `k` divided by `k`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{generic_dilation, StochasticMatrix, DEFAULT_MIXING_CAP};
use crate::eigen::dense_symmetric_spectrum;
use crate::error::{MixError, Result};

/// Detailed-balance tolerance used to decide whether the reversible-only
/// quantities apply.
pub const REVERSIBLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest power examined before giving up on certifying a positive gap.
    pub k_cap: usize,
    pub mixing_cap: usize,
    pub tv_threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            k_cap: 100_000,
            mixing_cap: DEFAULT_MIXING_CAP,
            tv_threshold: 0.25,
        }
    }
}

/// Exact gap profile of a known chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Absolute spectral gap, present only for reversible chains.
    pub gamma_star: Option<f64>,
    pub gamma_dagger_at_k: BTreeMap<usize, f64>,
    pub gamma_ddagger_at_k: BTreeMap<usize, f64>,
    pub gamma_ps: f64,
    pub gamma_dps: f64,
    /// Smallest maximizer of `gamma_dagger(P^k) / k`.
    pub k_ps: usize,
    /// Smallest maximizer of `gamma_ddagger(P^k) / k`.
    pub k_dps: usize,
    pub k_explored: usize,
    pub pi_star: f64,
    pub t_mix: Option<usize>,
}

impl SpectralReport {
    /// Truncated pseudo-spectral gap `max_{k <= K} gamma_dagger(P^k) / k`.
    pub fn gamma_ps_prefix(&self, k_max: usize) -> f64 {
        prefix_max(&self.gamma_dagger_at_k, k_max)
    }

    /// Truncated dilated pseudo-spectral gap `max_{k <= K} gamma_ddagger(P^k) / k`.
    pub fn gamma_dps_prefix(&self, k_max: usize) -> f64 {
        prefix_max(&self.gamma_ddagger_at_k, k_max)
    }
}

fn prefix_max(map: &BTreeMap<usize, f64>, k_max: usize) -> f64 {
    // Entries past k_explored are bounded by 1/k <= the certified maximum.
    map.range(1..=k_max)
        .map(|(&k, &g)| g / k as f64)
        .fold(0.0, f64::max)
}

/// Second singular value of a square matrix, from the dense spectrum of its
/// self-adjoint dilation.
pub fn second_singular_value(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() < 2 {
        return Ok(0.0);
    }
    let d = generic_dilation(a)?;
    Ok(dense_symmetric_spectrum(d.entries())?[1].max(0.0))
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// `gamma_star = 1 - max{|lambda| : lambda in spec(P), |lambda| != 1}`.
///
/// Reversible chains go through the symmetric matrix `L`; otherwise the
/// complex spectrum of `P` is used (diagnostic only).
pub fn absolute_spectral_gap(p: &StochasticMatrix) -> Result<f64> {
    p.stationary()?;
    if p.n() == 1 {
        return Ok(1.0);
    }
    let moduli: Vec<f64> = if p.is_reversible(REVERSIBLE_TOL)? {
        let l = p.l_matrix()?;
        let sym = (&l + l.transpose()) * 0.5;
        let spec = dense_symmetric_spectrum(&sym)?;
        spec[1..].iter().map(|v| v.abs()).collect()
    } else {
        let eig = p.matrix().complex_eigenvalues();
        let unit = eig
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
            .map(|(i, _)| i)
            .expect("nonempty spectrum");
        eig.iter()
            .enumerate()
            .filter(|&(i, _)| i != unit)
            .map(|(_, z)| z.norm())
            .collect()
    };
    Ok(clamp_unit(1.0 - moduli.into_iter().fold(0.0, f64::max)))
}

/// `gamma_dagger(P^k) = 1 - s_k^2` where `s_k` is the second singular value of `L^k`.
pub fn gamma_dagger(p: &StochasticMatrix, k: usize) -> Result<f64> {
    let s = second_singular_value(&l_power(p, k)?)?;
    Ok(clamp_unit(1.0 - s * s))
}

/// `gamma_ddagger(P^k) = 1 - s_k`.
pub fn gamma_ddagger(p: &StochasticMatrix, k: usize) -> Result<f64> {
    let s = second_singular_value(&l_power(p, k)?)?;
    Ok(clamp_unit(1.0 - s))
}

/// `L^k` for `k >= 1`.
pub fn l_power(p: &StochasticMatrix, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(MixError::InvalidArgument("power must be >= 1".into()));
    }
    let l = p.l_matrix()?;
    let mut lk = l.clone();
    for _ in 1..k {
        lk = &lk * &l;
    }
    Ok(lk)
}

/// Operator norm in `l2(pi)`: the spectral norm of `D^{1/2} A D^{-1/2}`.
pub fn pi_norm(a: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = a.nrows();
    let conj = DMatrix::from_fn(n, n, |x, y| pi[x].sqrt() * a[(x, y)] / pi[y].sqrt());
    conj.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `||(P* - Pi)^k (P - Pi)^k||_pi`, which equals `1 - gamma_dagger(P^k)`.
pub fn centered_power_norm(p: &StochasticMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(MixError::InvalidArgument("power must be >= 1".into()));
    }
    let proj = p.stationary_projector()?;
    let fwd = p.matrix() - &proj;
    let rev = p.time_reversal()?.matrix() - &proj;
    let fwd_k = crate::chain::matrix_power(&fwd, k);
    let rev_k = crate::chain::matrix_power(&rev, k);
    Ok(pi_norm(&(rev_k * fwd_k), p.stationary()?))
}

/// Runs the self-terminating gap loop and returns the full report.
///
/// Since `gamma_dagger(P^k) / k <= 1/k`, once `(k+1) * best >= 1` for both
/// gaps no larger power can improve on either maximum.
pub fn gap_profile(p: &StochasticMatrix, cfg: &OracleConfig) -> Result<SpectralReport> {
    p.stationary()?;
    // Periodic chains have gamma_ps = 0 exactly.
    if p.period() != Some(1) {
        return Err(MixError::NonConvergent { cap: cfg.k_cap });
    }
    let l = p.l_matrix()?;
    let mut lk = l.clone();
    let mut dagger = BTreeMap::new();
    let mut ddagger = BTreeMap::new();
    let (mut best_ps, mut k_ps) = (0.0f64, 0usize);
    let (mut best_dps, mut k_dps) = (0.0f64, 0usize);
    let mut k_explored = None;
    for k in 1..=cfg.k_cap {
        let s = second_singular_value(&lk)?;
        let gd = clamp_unit(1.0 - s * s);
        let gdd = clamp_unit(1.0 - s);
        dagger.insert(k, gd);
        ddagger.insert(k, gdd);
        let kf = k as f64;
        if gd / kf > best_ps {
            best_ps = gd / kf;
            k_ps = k;
        }
        if gdd / kf > best_dps {
            best_dps = gdd / kf;
            k_dps = k;
        }
        let next = (k + 1) as f64;
        if next * best_ps >= 1.0 && next * best_dps >= 1.0 {
            k_explored = Some(k);
            break;
        }
        lk = &lk * &l;
    }
    let k_explored = k_explored.ok_or(MixError::NonConvergent { cap: cfg.k_cap })?;
    let gamma_star = if p.is_reversible(REVERSIBLE_TOL)? {
        Some(absolute_spectral_gap(p)?)
    } else {
        None
    };
    Ok(SpectralReport {
        gamma_star,
        gamma_dagger_at_k: dagger,
        gamma_ddagger_at_k: ddagger,
        gamma_ps: best_ps,
        gamma_dps: best_dps,
        k_ps,
        k_dps,
        k_explored,
        pi_star: p.pi_star()?,
        t_mix: None,
    })
}

/// Gap profile plus the brute-force mixing time (`None` when the chain does
/// not mix within the cap).
pub fn spectral_report(p: &StochasticMatrix, cfg: &OracleConfig) -> Result<SpectralReport> {
    let mut report = gap_profile(p, cfg)?;
    report.t_mix = match p.mixing_time(cfg.tv_threshold, cfg.mixing_cap) {
        Ok(t) => Some(t),
        Err(MixError::NotMixedByCap { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

/// Exact pseudo-spectral gap `max_k gamma_dagger(P^k) / k` with its report.
pub fn pseudo_spectral_gap(p: &StochasticMatrix) -> Result<SpectralReport> {
    gap_profile(p, &OracleConfig::default())
}

/// Exact dilated pseudo-spectral gap `max_k gamma_ddagger(P^k) / k` with its report.
pub fn dilated_pseudo_spectral_gap(p: &StochasticMatrix) -> Result<SpectralReport> {
    gap_profile(p, &OracleConfig::default())
}

/// Spectral bounds on the mixing time next to its brute-force value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSandwich {
    pub t_mix: usize,
    pub gamma_ps: f64,
    pub gamma_dps: f64,
    pub pi_star: f64,
    /// `1/(2 gamma_ps) <= t_mix <= log(4e/pi_star) / gamma_ps`.
    pub ps_bounds: (f64, f64),
    /// `1/(4 gamma_dps) <= t_mix <= log(4e/pi_star) / gamma_dps`.
    pub dps_bounds: (f64, f64),
    /// `(1/gamma_star - 1) log 2 <= t_mix <= log(4/pi_star) / gamma_star`, reversible only.
    pub relaxation_bounds: Option<(f64, f64)>,
}

impl MixingSandwich {
    pub fn holds(&self, slack: f64) -> bool {
        let t = self.t_mix as f64;
        let inside = |(lo, hi): (f64, f64)| lo <= t + slack && t <= hi + slack;
        inside(self.ps_bounds)
            && inside(self.dps_bounds)
            && self.relaxation_bounds.is_none_or(inside)
    }
}

pub fn mixing_time_sandwich(p: &StochasticMatrix) -> Result<MixingSandwich> {
    let cfg = OracleConfig::default();
    let t_mix = p.mixing_time(cfg.tv_threshold, cfg.mixing_cap)?;
    let report = gap_profile(p, &cfg)?;
    let pi_star = report.pi_star;
    let log_term = (4.0 * std::f64::consts::E / pi_star).ln();
    let relaxation_bounds = report.gamma_star.map(|g| {
        (
            (1.0 / g - 1.0) * std::f64::consts::LN_2,
            (4.0 / pi_star).ln() / g,
        )
    });
    Ok(MixingSandwich {
        t_mix,
        gamma_ps: report.gamma_ps,
        gamma_dps: report.gamma_dps,
        pi_star,
        ps_bounds: (0.5 / report.gamma_ps, log_term / report.gamma_ps),
        dps_bounds: (0.25 / report.gamma_dps, log_term / report.gamma_dps),
        relaxation_bounds,
    })
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub property: String,
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Outcome of [`verify_lemma_properties`]; violations are recorded, not raised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaLedger {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaLedger {
    pub fn violations(&self) -> Vec<&LemmaCheck> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    fn push_le(&mut self, property: &str, params: String, lhs: f64, rhs: f64, slack: f64) {
        self.checks.push(LemmaCheck {
            property: property.into(),
            params,
            lhs,
            rhs,
            holds: lhs <= rhs + slack,
        });
    }

    fn push_lt(&mut self, property: &str, params: String, lhs: f64, rhs: f64, slack: f64) {
        self.checks.push(LemmaCheck {
            property: property.into(),
            params,
            lhs,
            rhs,
            holds: lhs < rhs + slack,
        });
    }
}

/// Slack applied to every inequality in [`verify_lemma_properties`].
pub const LEMMA_SLACK: f64 = 1e-9;

/// Checks the structural inequalities relating `gamma_ps` to the gaps of
/// skipped chains `P^p`:
///
/// * sub-multiplicativity of `N(j) = ||(P* - Pi)^j (P - Pi)^j||_pi`:
///   `N(r+s) <= N(r) N(s)` for `r + s <= k_max`;
/// * `p g (1 - p k_ps g / 2) < g_p <= p g` for `p <= k_max`, with `g = gamma_ps`
///   and `g_p = gamma_ps(P^p)`;
/// * `g_p > 1/2` for `p >= 2^ceil(log2 1/g)`;
/// * `g_p > p g / (2 log(4e/pi_star) + 2)` for `p < 1/g`.
pub fn verify_lemma_properties(p: &StochasticMatrix, k_max: usize) -> Result<LemmaLedger> {
    if k_max == 0 || k_max > 20 {
        return Err(MixError::InvalidArgument(format!(
            "k_max must lie in 1..=20, got {k_max}"
        )));
    }
    let cfg = OracleConfig::default();
    let base = gap_profile(p, &cfg)?;
    let g = base.gamma_ps;
    let k_ps = base.k_ps as f64;
    let mut ledger = LemmaLedger::default();

    let norms: Vec<f64> = (1..=k_max)
        .map(|j| centered_power_norm(p, j))
        .collect::<Result<_>>()?;
    for r in 1..k_max {
        for s in 1..=(k_max - r) {
            ledger.push_le(
                "sub_multiplicativity",
                format!("r={r} s={s}"),
                norms[r + s - 1],
                norms[r - 1] * norms[s - 1],
                LEMMA_SLACK,
            );
        }
    }

    let mut skipped_gap = BTreeMap::new();
    let mut gamma_ps_of_power = |q: usize| -> Result<f64> {
        if let Some(&v) = skipped_gap.get(&q) {
            return Ok(v);
        }
        let v = gap_profile(&p.power(q)?, &cfg)?.gamma_ps;
        skipped_gap.insert(q, v);
        Ok(v)
    };

    for q in 1..=k_max {
        let gq = gamma_ps_of_power(q)?;
        let qf = q as f64;
        ledger.push_lt(
            "skipped_gap_lower",
            format!("p={q}"),
            qf * g * (1.0 - qf * k_ps * g / 2.0),
            gq,
            LEMMA_SLACK,
        );
        ledger.push_le("skipped_gap_upper", format!("p={q}"), gq, qf * g, LEMMA_SLACK);
    }

    let mut p0 = 1usize;
    while (p0 as f64) * g < 1.0 {
        p0 *= 2;
    }
    let mut termination_ps = vec![p0];
    termination_ps.extend((p0 + 1)..=k_max);
    for q in termination_ps {
        let gq = gamma_ps_of_power(q)?;
        ledger.push_lt("termination", format!("p={q}"), 0.5, gq, LEMMA_SLACK);
    }

    let denom = 2.0 * (4.0 * std::f64::consts::E / base.pi_star).ln() + 2.0;
    for q in (1..=k_max).filter(|&q| (q as f64) * g < 1.0) {
        let gq = gamma_ps_of_power(q)?;
        ledger.push_lt(
            "intermediate_range",
            format!("p={q}"),
            q as f64 * g / denom,
            gq,
            LEMMA_SLACK,
        );
    }
    Ok(ledger)
}

/// `1 - (1 - x)^p >= p x (1 - p x / 2)` for `x in [0, 1]`.
pub fn power_gap_lower_bound_holds(x: f64, p: u32) -> bool {
    let pf = p as f64;
    1.0 - (1.0 - x).powi(p as i32) >= pf * x * (1.0 - pf * x / 2.0)
}

/// `(1 - t)^floor(1/t) < 1/2` for `t = num / den in (0, 1]`, with the floor
/// taken exactly in integers.
pub fn halving_inequality_holds(num: u64, den: u64) -> bool {
    assert!(num >= 1 && num <= den);
    let t = num as f64 / den as f64;
    let exponent = den / num;
    (1.0 - t).powi(exponent as i32) < 0.5
}

/// `Gamma(P) = max_x ||e_x P||_{1/2} / pi(x)` with `||v||_{1/2} = (sum sqrt|v_i|)^2`.
pub fn gamma_diagnostic(p: &StochasticMatrix) -> Result<f64> {
    let pi = p.stationary()?;
    Ok((0..p.n())
        .map(|x| {
            let root_sum: f64 = p.matrix().row(x).iter().map(|v| v.abs().sqrt()).sum();
            root_sum * root_sum / pi[x]
        })
        .fold(0.0, f64::max))
}
