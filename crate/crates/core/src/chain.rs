//! Finite-state transition matrices and the operations built on them:
//! stationary distributions, time reversal, powers, the rescaled matrix
//! `L = D_pi^{1/2} P D_pi^{-1/2}`, reversible dilations, simulation and
//! brute-force mixing times.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MixError, Result};
use crate::trajectory::Trajectory;

/// Row sums and entry signs are validated to this tolerance on construction.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Residual tolerance for fixed-point identities such as `pi P = pi`.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Above this size the stationary distribution is found by power iteration.
pub const DENSE_STATIONARY_MAX: usize = 2048;
/// Default cap for [`StochasticMatrix::mixing_time`].
pub const DEFAULT_MIXING_CAP: usize = 1_000_000;

/// A row-stochastic square matrix with a lazily cached stationary distribution.
#[derive(Debug, Clone)]
pub struct StochasticMatrix {
    p: DMatrix<f64>,
    stationary: OnceLock<Vec<f64>>,
}

impl PartialEq for StochasticMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
    }
}

impl StochasticMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(MixError::InvalidMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        for x in 0..n {
            let mut sum = 0.0;
            for y in 0..n {
                let v = p[(x, y)];
                if !v.is_finite() || v < 0.0 {
                    return Err(MixError::InvalidMatrix(format!(
                        "entry ({x},{y}) = {v} is not a nonnegative real"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MixError::InvalidMatrix(format!(
                    "row {x} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self::from_parts(p, None))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MixError::InvalidMatrix("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Wraps a matrix produced by an exact algebraic operation on valid inputs.
    pub(crate) fn from_parts(p: DMatrix<f64>, pi: Option<Vec<f64>>) -> Self {
        let stationary = OnceLock::new();
        if let Some(pi) = pi {
            let _ = stationary.set(pi);
        }
        Self { p, stationary }
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[(x, y)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.p.row(i).iter().copied().collect())
            .collect()
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n)
            .map(|x| (0..n).filter(|&y| self.p[(x, y)] > 0.0).collect())
            .collect()
    }

    /// Strong connectivity of the positive-support digraph.
    pub fn is_irreducible(&self) -> bool {
        let succ = self.successors();
        let mut pred = vec![Vec::new(); self.n()];
        for (x, ys) in succ.iter().enumerate() {
            for &y in ys {
                pred[y].push(x);
            }
        }
        reaches_all(&succ) && reaches_all(&pred)
    }

    /// Period of an irreducible chain (gcd of cycle lengths through state 0);
    /// `None` when the chain is reducible.
    pub fn period(&self) -> Option<usize> {
        if !self.is_irreducible() {
            return None;
        }
        let succ = self.successors();
        let levels = bfs_levels(&succ, 0);
        let mut g = 0usize;
        for (x, ys) in succ.iter().enumerate() {
            let lx = levels[x].expect("irreducible");
            for &y in ys {
                let ly = levels[y].expect("irreducible");
                g = gcd(g, (lx + 1).abs_diff(ly));
            }
        }
        Some(g.max(1))
    }

    /// Irreducible and aperiodic.
    pub fn is_ergodic(&self) -> bool {
        self.period() == Some(1)
    }

    /// Stationary distribution, computed once and cached.
    pub fn stationary(&self) -> Result<&[f64]> {
        if let Some(pi) = self.stationary.get() {
            return Ok(pi);
        }
        if !self.is_irreducible() {
            return Err(MixError::Reducible);
        }
        let pi = if self.n() <= DENSE_STATIONARY_MAX {
            stationary_dense(&self.p)?
        } else {
            stationary_power(&self.p)
        };
        Ok(self.stationary.get_or_init(|| pi))
    }

    /// Minimum stationary probability.
    pub fn pi_star(&self) -> Result<f64> {
        Ok(self
            .stationary()?
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    /// Detailed balance `pi(x) P(x,y) = pi(y) P(y,x)` within `tol`.
    pub fn is_reversible(&self, tol: f64) -> Result<bool> {
        let pi = self.stationary()?;
        let n = self.n();
        for x in 0..n {
            for y in (x + 1)..n {
                if (pi[x] * self.p[(x, y)] - pi[y] * self.p[(y, x)]).abs() > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// The adjoint of `P` in `l2(pi)`: `P*(x,y) = pi(y) P(y,x) / pi(x)`.
    pub fn time_reversal(&self) -> Result<StochasticMatrix> {
        let pi = self.stationary()?;
        let n = self.n();
        let rev = DMatrix::from_fn(n, n, |x, y| pi[y] * self.p[(y, x)] / pi[x]);
        Ok(Self::from_parts(rev, Some(pi.to_vec())))
    }

    /// `P^k`, the transition matrix of the `k`-skipped chain.
    pub fn power(&self, k: usize) -> Result<StochasticMatrix> {
        if k == 0 {
            return Err(MixError::InvalidArgument("power must be >= 1".into()));
        }
        Ok(Self::from_parts(
            matrix_power(&self.p, k),
            self.stationary.get().cloned(),
        ))
    }

    /// `L = D_pi^{1/2} P D_pi^{-1/2}`.
    pub fn l_matrix(&self) -> Result<DMatrix<f64>> {
        let pi = self.stationary()?;
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |x, y| {
            pi[x].sqrt() * self.p[(x, y)] / pi[y].sqrt()
        }))
    }

    /// `Pi = 1^T pi`, every row equal to the stationary distribution.
    pub fn stationary_projector(&self) -> Result<DMatrix<f64>> {
        let pi = self.stationary()?;
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |_, y| pi[y]))
    }

    /// The 2n-state block matrix `[[0, P], [P*, 0]]`.
    pub fn reversible_dilation(&self) -> Result<DilatedMatrix> {
        let rev = self.time_reversal()?;
        Ok(DilatedMatrix::from_blocks(&self.p, &rev.p))
    }

    /// `(P + P*) / 2`.
    pub fn additive_reversiblization(&self) -> Result<StochasticMatrix> {
        let rev = self.time_reversal()?;
        let pi = self.stationary()?.to_vec();
        Ok(Self::from_parts((&self.p + &rev.p) * 0.5, Some(pi)))
    }

    /// Brute-force mixing time: the first `t >= 1` with
    /// `max_x ||e_x P^t - pi||_TV < threshold`.
    ///
    /// Point masses suffice because total variation is convex in the initial
    /// distribution.
    pub fn mixing_time(&self, threshold: f64, cap: usize) -> Result<usize> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(MixError::InvalidArgument(format!(
                "TV threshold {threshold} must lie in (0, 1]"
            )));
        }
        let pi = self.stationary()?.to_vec();
        // A d-periodic chain keeps TV >= 1 - 1/d >= 1/2 forever.
        if threshold <= 0.5 && self.period() != Some(1) {
            return Err(MixError::NotMixedByCap { cap });
        }
        let mut rows = self.p.clone();
        for t in 1..=cap {
            if worst_tv(&rows, &pi) < threshold {
                return Ok(t);
            }
            rows = &rows * &self.p;
        }
        Err(MixError::NotMixedByCap { cap })
    }
}

/// Largest total-variation distance between a row of `rows` and `pi`.
pub fn worst_tv(rows: &DMatrix<f64>, pi: &[f64]) -> f64 {
    (0..rows.nrows())
        .map(|x| {
            0.5 * pi
                .iter()
                .enumerate()
                .map(|(y, &p)| (rows[(x, y)] - p).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// A `2n x 2n` matrix `[[0, A], [B, 0]]` with zero diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedMatrix {
    base_n: usize,
    entries: DMatrix<f64>,
}

impl DilatedMatrix {
    fn from_blocks(upper: &DMatrix<f64>, lower: &DMatrix<f64>) -> Self {
        let n = upper.nrows();
        let mut entries = DMatrix::zeros(2 * n, 2 * n);
        entries.view_mut((0, n), (n, n)).copy_from(upper);
        entries.view_mut((n, 0), (n, n)).copy_from(lower);
        Self { base_n: n, entries }
    }

    pub fn base_n(&self) -> usize {
        self.base_n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

/// The self-adjoint dilation `[[0, A], [A^T, 0]]` of a square real matrix.
pub fn generic_dilation(a: &DMatrix<f64>) -> Result<DilatedMatrix> {
    if a.nrows() != a.ncols() {
        return Err(MixError::InvalidMatrix(format!(
            "dilation needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(DilatedMatrix::from_blocks(a, &a.transpose()))
}

pub(crate) fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut result = a.clone();
    for _ in 1..k {
        result = &result * a;
    }
    result
}

/// Initial condition for [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    State(usize),
    Distribution(Vec<f64>),
    Stationary,
}

/// Draws `X_1, ..., X_m` from `P`, deterministically given `seed`.
pub fn simulate(p: &StochasticMatrix, m: usize, start: &Start, seed: u64) -> Result<Trajectory> {
    if m == 0 {
        return Err(MixError::InvalidArgument(
            "trajectory length must be >= 1".into(),
        ));
    }
    let n = p.n();
    let weighted = |w: &[f64]| {
        WeightedIndex::new(w).map_err(|e| MixError::InvalidArgument(format!("bad weights: {e}")))
    };
    let rows = p
        .to_rows()
        .iter()
        .map(|r| weighted(r))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = match start {
        Start::State(x) if *x < n => *x,
        Start::State(x) => {
            return Err(MixError::InvalidArgument(format!(
                "start state {x} out of range for {n} states"
            )))
        }
        Start::Distribution(mu) => {
            if mu.len() != n {
                return Err(MixError::InvalidArgument(
                    "initial distribution has the wrong length".into(),
                ));
            }
            weighted(mu)?.sample(&mut rng)
        }
        Start::Stationary => weighted(p.stationary()?)?.sample(&mut rng),
    };
    let mut states = Vec::with_capacity(m);
    states.push(first);
    let mut x = first;
    for _ in 1..m {
        x = rows[x].sample(&mut rng);
        states.push(x);
    }
    Trajectory::new(states, n)
}

fn stationary_dense(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    // (P^T - I) pi^T = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MixError::InvalidMatrix("singular stationary system".into()))?;
    Ok(normalize(sol.iter().map(|v| v.max(0.0)).collect()))
}

fn stationary_power(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut pi = vec![1.0 / n as f64; n];
    // The lazy chain (I + P)/2 shares pi and is aperiodic.
    for _ in 0..1_000_000 {
        let row = DVector::from_column_slice(&pi).transpose() * p;
        let next: Vec<f64> = pi
            .iter()
            .zip(row.iter())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let next = normalize(next);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    bfs_levels(adj, 0).iter().all(Option::is_some)
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        let lx = level[x].unwrap_or(0);
        for &y in &adj[x] {
            if level[y].is_none() {
                level[y] = Some(lx + 1);
                queue.push_back(y);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
