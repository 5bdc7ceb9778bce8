//! Counting statistics of skipped chains and the empirical matrices built
//! from them.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};
use crate::trajectory::Trajectory;

/// Dense counting is used up to this many states; above it counts go
/// through a hash map.
const DENSE_COUNT_MAX: usize = 512;

/// Visit and transition counts of the `k`-skipped chain
/// `X_1, X_{1+k}, ..., X_{1+floor((m-1)/k) k}`.
///
/// `visits[x]` counts `t = 1..=floor((m-1)/k)` with `X_{1+k(t-1)} = x`, so the
/// final state of the skipped sequence is never counted as a departure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTallies {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub visits: Vec<u64>,
    /// Nonzero transition counts `(x, x', N_xx')`, sorted by `(x, x')`.
    pub transitions: Vec<(usize, usize, u64)>,
}

impl SkippedTallies {
    /// Builds tallies directly from counts, checking row-marginal consistency.
    pub fn from_counts(k: usize, m: usize, counts: &DMatrix<u64>) -> Result<Self> {
        let n = counts.nrows();
        if counts.ncols() != n || n == 0 || k == 0 {
            return Err(MixError::InvalidArgument("bad count matrix".into()));
        }
        let visits: Vec<u64> = (0..n).map(|x| counts.row(x).iter().sum()).collect();
        let total: u64 = visits.iter().sum();
        if m < 1 || total != ((m - 1) / k) as u64 {
            return Err(MixError::InvalidArgument(format!(
                "counts sum to {total}, expected floor(({m}-1)/{k})"
            )));
        }
        let mut transitions = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if counts[(x, y)] > 0 {
                    transitions.push((x, y, counts[(x, y)]));
                }
            }
        }
        Ok(Self {
            k,
            n,
            m,
            visits,
            transitions,
        })
    }

    /// Number of counted pairs, `floor((m-1)/k)`.
    pub fn pairs(&self) -> usize {
        (self.m - 1) / self.k
    }

    pub fn n_min(&self) -> u64 {
        self.visits.iter().copied().min().unwrap_or(0)
    }

    pub fn n_max(&self) -> u64 {
        self.visits.iter().copied().max().unwrap_or(0)
    }

    pub fn transition_count(&self, x: usize, y: usize) -> u64 {
        self.transitions
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(x, y)))
            .map(|i| self.transitions[i].2)
            .unwrap_or(0)
    }

    pub fn dense_transitions(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for &(x, y, c) in &self.transitions {
            d[(x, y)] = c as f64;
        }
        d
    }

    /// States with `N_x = 0`.
    pub fn unvisited(&self) -> Vec<usize> {
        (0..self.n).filter(|&x| self.visits[x] == 0).collect()
    }

    /// Unsmoothed `L-hat(x,x') = N_xx' / sqrt(N_x N_x')`.
    pub fn unsmoothed_l_hat(&self) -> Result<DMatrix<f64>> {
        let unvisited = self.unvisited();
        if !unvisited.is_empty() {
            return Err(MixError::UnvisitedState { states: unvisited });
        }
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(x, y, c) in &self.transitions {
            l[(x, y)] = c as f64 / ((self.visits[x] as f64) * (self.visits[y] as f64)).sqrt();
        }
        Ok(l)
    }

    /// The alpha-smoothed empirical matrices.
    pub fn smoothed(&self, alpha: f64) -> Result<SmoothedEstimates> {
        SmoothedEstimates::new(self, alpha)
    }
}

/// Counts the `k`-skipped chain of a trajectory in one pass.
pub fn tally(tr: &Trajectory, k: usize) -> Result<SkippedTallies> {
    if k == 0 {
        return Err(MixError::InvalidArgument("skip rate must be >= 1".into()));
    }
    tr.require_len(k + 1)?;
    let n = tr.n();
    let m = tr.len();
    let pairs = (m - 1) / k;
    let states = tr.states();
    let mut visits = vec![0u64; n];
    let mut transitions;
    let pair_iter = (1..=pairs).map(|t| (states[k * (t - 1)], states[k * t]));
    if n <= DENSE_COUNT_MAX {
        let mut counts = vec![0u64; n * n];
        for (x, y) in pair_iter {
            visits[x] += 1;
            counts[x * n + y] += 1;
        }
        transitions = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i / n, i % n, c))
            .collect::<Vec<_>>();
    } else {
        let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
        for (x, y) in pair_iter {
            visits[x] += 1;
            *counts.entry((x, y)).or_default() += 1;
        }
        transitions = counts.into_iter().map(|((x, y), c)| (x, y, c)).collect();
        transitions.sort_unstable();
    }
    Ok(SkippedTallies {
        k,
        n,
        m,
        visits,
        transitions,
    })
}

/// `P-hat = (N_xx' + a) / (N_x + n a)`, `pi-hat = (N_x + n a) / (pairs + n^2 a)`
/// and `L-hat = D^{1/2} P-hat D^{-1/2}` with `D = diag(pi-hat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEstimates {
    pub alpha: f64,
    pub p_hat: DMatrix<f64>,
    pub pi_hat: Vec<f64>,
    pub l_hat: DMatrix<f64>,
}

impl SmoothedEstimates {
    pub fn new(t: &SkippedTallies, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(MixError::InvalidArgument(format!(
                "smoothing alpha must be positive, got {alpha}"
            )));
        }
        let n = t.n;
        let nf = n as f64;
        let counts = t.dense_transitions();
        let row_mass: Vec<f64> = t.visits.iter().map(|&v| v as f64 + nf * alpha).collect();
        let total = t.pairs() as f64 + nf * nf * alpha;
        let p_hat = DMatrix::from_fn(n, n, |x, y| (counts[(x, y)] + alpha) / row_mass[x]);
        let pi_hat: Vec<f64> = row_mass.iter().map(|r| r / total).collect();
        // sqrt(pi_x) P(x,y) / sqrt(pi_y) simplifies to (N_xy + a) / sqrt(r_x r_y).
        let l_hat = DMatrix::from_fn(n, n, |x, y| {
            (counts[(x, y)] + alpha) / (row_mass[x] * row_mass[y]).sqrt()
        });
        Ok(Self {
            alpha,
            p_hat,
            pi_hat,
            l_hat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tr(states: &[usize], n: usize) -> Trajectory {
        Trajectory::new(states.to_vec(), n).unwrap()
    }

    #[test]
    fn tally_k1_direct_count() {
        let t = tally(&tr(&[0, 1, 0, 1, 1], 2), 1).unwrap();
        assert_eq!(t.visits, vec![2, 2]);
        assert_eq!(t.transition_count(0, 1), 2);
        assert_eq!(t.transition_count(1, 0), 1);
        assert_eq!(t.transition_count(1, 1), 1);
        assert_eq!(t.transition_count(0, 0), 0);
        assert_eq!(t.pairs(), 4);
    }

    #[test]
    fn tally_k2_direct_count() {
        let t = tally(&tr(&[0, 1, 0, 1, 1], 2), 2).unwrap();
        assert_eq!(t.visits, vec![2, 0]);
        assert_eq!(t.transition_count(0, 0), 1);
        assert_eq!(t.transition_count(0, 1), 1);
        assert_eq!(t.transitions.len(), 2);
    }

    #[test]
    fn tally_constant_trajectory() {
        let c = tr(&[0; 11], 3);
        for k in 1..=10 {
            let t = tally(&c, k).unwrap();
            assert_eq!(t.visits, vec![(10 / k) as u64, 0, 0]);
            assert_eq!(t.transitions, vec![(0, 0, (10 / k) as u64)]);
        }
    }

    #[test]
    fn tally_errors() {
        assert!(matches!(
            tally(&tr(&[0, 1], 2), 2),
            Err(MixError::TrajectoryTooShort { len: 2, needed: 3 })
        ));
        assert!(tally(&tr(&[0, 1], 2), 0).is_err());
    }

    #[test]
    fn unsmoothed_l_hat_values() {
        let x = tr(&[0, 1, 0, 1, 1], 2);
        let l = tally(&x, 1).unwrap().unsmoothed_l_hat().unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.5]);
        assert!((l - expected).amax() < 1e-15);
        assert_eq!(
            tally(&x, 2).unwrap().unsmoothed_l_hat().unwrap_err(),
            MixError::UnvisitedState { states: vec![1] }
        );
    }

    #[test]
    fn smoothed_values() {
        let t = tally(&tr(&[0, 1, 0, 1, 1], 2), 2).unwrap();
        let s = t.smoothed(0.1).unwrap();
        for v in s.p_hat.iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.pi_hat[0], 2.2 / 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.pi_hat[1], 0.2 / 2.4, epsilon = 1e-15);
        // L-hat is the similarity transform of P-hat by diag(pi-hat)^{1/2}.
        for x in 0..2 {
            for y in 0..2 {
                let direct = s.pi_hat[x].sqrt() * s.p_hat[(x, y)] / s.pi_hat[y].sqrt();
                assert_abs_diff_eq!(s.l_hat[(x, y)], direct, epsilon = 1e-14);
            }
        }
        assert!(t.smoothed(0.0).is_err());
        assert!(t.smoothed(-1.0).is_err());
    }

    #[test]
    fn heavy_smoothing_flattens_rows() {
        let t = tally(&tr(&[0, 1, 2, 2, 2, 0, 0, 1, 2], 3), 1).unwrap();
        let s = t.smoothed(1e9).unwrap();
        for v in s.p_hat.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn vanishing_smoothing_recovers_ratios() {
        let t = tally(&tr(&[0, 1, 2, 2, 2, 0, 0, 1, 2, 1, 0], 3), 1).unwrap();
        let s = t.smoothed(1e-12).unwrap();
        let counts = t.dense_transitions();
        for x in 0..3 {
            for y in 0..3 {
                let ratio = counts[(x, y)] / t.visits[x] as f64;
                assert_abs_diff_eq!(s.p_hat[(x, y)], ratio, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn sparse_and_dense_counting_agree() {
        let n = DENSE_COUNT_MAX + 1;
        let states: Vec<usize> = (0..5000).map(|i| (i * 7919 + i / 3) % n).collect();
        let big = Trajectory::new(states.clone(), n).unwrap();
        let t = tally(&big, 3).unwrap();
        assert_eq!(t.visits.iter().sum::<u64>(), (4999 / 3) as u64);
        let small: Vec<usize> = states.iter().map(|&s| s % 7).collect();
        let ts = tally(&Trajectory::new(small, 7).unwrap(), 3).unwrap();
        assert!(ts.transitions.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        assert!(t.transitions.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
    }

    #[test]
    fn from_counts_checks_totals() {
        let c = DMatrix::from_row_slice(2, 2, &[1u64, 1, 1, 1]);
        assert!(SkippedTallies::from_counts(1, 5, &c).is_ok());
        assert!(SkippedTallies::from_counts(1, 6, &c).is_err());
    }

    proptest! {
        #[test]
        fn tally_conservation(states in prop::collection::vec(0usize..4, 2..200), k in 1usize..8) {
            let x = Trajectory::new(states, 4).unwrap();
            prop_assume!(x.len() > k);
            let t = tally(&x, k).unwrap();
            prop_assert_eq!(t.visits.iter().sum::<u64>() as usize, (x.len() - 1) / k);
            for s in 0..4 {
                let row: u64 = t.transitions.iter().filter(|e| e.0 == s).map(|e| e.2).sum();
                prop_assert_eq!(row, t.visits[s]);
            }
            // Tallying the skipped sequence at rate 1 gives the same counts.
            let direct = tally(&x.skipped(k).unwrap(), 1).unwrap();
            prop_assert_eq!(&direct.visits, &t.visits);
            prop_assert_eq!(&direct.transitions, &t.transitions);
            prop_assert_eq!(tally(&x, k).unwrap(), t);
        }

        #[test]
        fn smoothed_normalization(states in prop::collection::vec(0usize..5, 2..100), alpha in 1e-6f64..10.0) {
            let x = Trajectory::new(states, 5).unwrap();
            let s = tally(&x, 1).unwrap().smoothed(alpha).unwrap();
            prop_assert!((s.pi_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for row in s.p_hat.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            prop_assert!(s.p_hat.iter().all(|&v| v > 0.0));
            prop_assert!(s.pi_hat.iter().all(|&v| v > 0.0));
        }
    }
}
