//! Convergence and coverage study over a grid of trajectory lengths.
//!
//! Each `(m, trial)` cell is independent with a seed derived from the base
//! seed, so results do not depend on thread count or scheduling.

use rayon::prelude::*;
use serde::Serialize;

use mixgap::confidence::{confidence_interval, ConfidenceConfig};
use mixgap::estimators::EstimatorConfig;
use mixgap::oracle::{gap_profile, OracleConfig};
use mixgap::{simulate, MixError, Start, StochasticMatrix};

use crate::CliError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "MIXGAP_THREADS";

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub m_grid: Vec<usize>,
    pub seeds: usize,
    pub alpha: f64,
    pub delta: f64,
    pub c: f64,
    pub base_seed: u64,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Trial,
    Median,
}

/// One CSV row. For median rows `seed` is empty and `covered` is the
/// fraction of covering trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub kind: RowKind,
    pub m: usize,
    pub seed: Option<u64>,
    pub estimate: f64,
    pub oracle_gamma_dps: f64,
    pub abs_error: f64,
    pub half_width: f64,
    pub covered: f64,
    pub k_hat: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at length `m`.
pub fn trial_seed(base: u64, m: usize, trial: usize) -> u64 {
    splitmix64(base ^ splitmix64(m as u64 ^ splitmix64(trial as u64)))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs every cell on the current rayon pool and appends one median row per `m`.
pub fn run(p: &StochasticMatrix, spec: &BenchSpec) -> Result<Vec<BenchRow>, MixError> {
    let oracle = gap_profile(p, &OracleConfig::default())?.gamma_dps;
    let cfg = ConfidenceConfig {
        c: spec.c,
        estimator: spec.estimator,
        oracle: OracleConfig::default(),
    };
    let cells: Vec<(usize, usize)> = spec
        .m_grid
        .iter()
        .flat_map(|&m| (0..spec.seeds).map(move |t| (m, t)))
        .collect();
    let trials = cells
        .par_iter()
        .map(|&(m, t)| {
            let seed = trial_seed(spec.base_seed, m, t);
            let tr = simulate(p, m, &Start::Stationary, seed)?;
            let ci = confidence_interval(&tr, spec.alpha, spec.delta, &cfg)?;
            let covered = ci.interval.0 <= oracle && oracle <= ci.interval.1;
            Ok(BenchRow {
                kind: RowKind::Trial,
                m,
                seed: Some(seed),
                estimate: ci.point,
                oracle_gamma_dps: oracle,
                abs_error: (ci.point - oracle).abs(),
                half_width: ci.half_width,
                covered: if covered { 1.0 } else { 0.0 },
                k_hat: ci.k_hat as f64,
            })
        })
        .collect::<Result<Vec<_>, MixError>>()?;
    let mut rows = trials.clone();
    for &m in &spec.m_grid {
        let at_m: Vec<&BenchRow> = trials.iter().filter(|r| r.m == m).collect();
        let col = |f: fn(&BenchRow) -> f64| at_m.iter().map(|r| f(r)).collect::<Vec<_>>();
        let covered = col(|r| r.covered);
        rows.push(BenchRow {
            kind: RowKind::Median,
            m,
            seed: None,
            estimate: median(col(|r| r.estimate)),
            oracle_gamma_dps: oracle,
            abs_error: median(col(|r| r.abs_error)),
            half_width: median(col(|r| r.half_width)),
            covered: covered.iter().sum::<f64>() / covered.len().max(1) as f64,
            k_hat: median(col(|r| r.k_hat)),
        });
    }
    Ok(rows)
}

/// Reads the thread cap from the environment (absent or 0 means rayon's default).
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

pub fn run_with_env_threads(p: &StochasticMatrix, spec: &BenchSpec) -> Result<Vec<BenchRow>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads_from_env()?)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(|| run(p, spec))?)
}

pub fn to_csv(rows: &[BenchRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_across_cells() {
        let mut seen = std::collections::HashSet::new();
        for m in [10, 100, 1000] {
            for t in 0..50 {
                assert!(seen.insert(trial_seed(7, m, t)));
            }
        }
        assert_ne!(trial_seed(0, 10, 0), trial_seed(1, 10, 0));
    }

    #[test]
    fn median_of_even_and_odd_lengths() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![1.0, f64::INFINITY, f64::INFINITY, 2.0]).is_infinite());
    }

    #[test]
    fn row_count_and_header() {
        let p = mixgap::fixtures::by_name("fast3").unwrap();
        let spec = BenchSpec {
            m_grid: vec![100, 200],
            seeds: 3,
            alpha: 0.01,
            delta: 0.05,
            c: 48.0,
            base_seed: 1,
            estimator: EstimatorConfig::default(),
        };
        let rows = run(&p, &spec).unwrap();
        assert_eq!(rows.len(), 2 * 3 + 2);
        let csv = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        assert!(csv.starts_with(
            "kind,m,seed,estimate,oracle_gamma_dps,abs_error,half_width,covered,k_hat\n"
        ));
        assert_eq!(csv.lines().count(), 9);
    }
}
