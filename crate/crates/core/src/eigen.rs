//! Symmetric eigenvalue routines.
//!
//! Two paths: a dense full-spectrum solver (backed by nalgebra's symmetric QR)
//! used as ground truth on small matrices, and a Lanczos iteration with full
//! reorthogonalization that only needs matrix-vector products. The Lanczos path
//! targets the second-largest eigenvalue of a shifted dilation `S(L) + I`,
//! which is positive semi-definite, so the second-largest signed eigenvalue
//! coincides with the second-largest in magnitude.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};

/// Maximum tolerated `|A - A^T|` entry for inputs declared symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Default size up to which the dense solver is preferred over Lanczos.
pub const DEFAULT_DENSE_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub max_iter: usize,
    /// Ritz residual `||A v - theta v||` required for convergence.
    pub tol: f64,
    pub reorthogonalize: bool,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-10,
            reorthogonalize: true,
            seed: 0,
        }
    }
}

impl LanczosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 2 || !(self.tol > 0.0) {
            return Err(MixError::InvalidArgument(format!(
                "Lanczos needs max_iter >= 2 and tol > 0 (got {} and {})",
                self.max_iter, self.tol
            )));
        }
        Ok(())
    }
}

/// Chooses between the dense and Lanczos paths by matrix size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub lanczos: LanczosConfig,
    pub dense_threshold: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            lanczos: LanczosConfig::default(),
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
        }
    }
}

/// A symmetric linear operator known only through its action on vectors.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = (0..n).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
}

/// A square linear map together with its transpose action.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearMap for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        SymmetricOperator::apply(self, x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (j, yj) in y.iter_mut().enumerate().take(n) {
            *yj = (0..n).map(|i| self[(i, j)] * x[i]).sum();
        }
    }
}

/// `A^k` applied as `k` successive products, never formed explicitly.
pub struct MatrixPowerMap<'a, M: LinearMap> {
    pub base: &'a M,
    pub k: usize,
}

impl<M: LinearMap> MatrixPowerMap<'_, M> {
    fn repeat(&self, x: &[f64], y: &mut [f64], f: impl Fn(&M, &[f64], &mut [f64])) {
        let mut cur = x.to_vec();
        for _ in 0..self.k {
            f(self.base, &cur, y);
            cur.copy_from_slice(y);
        }
        y.copy_from_slice(&cur);
    }
}

impl<M: LinearMap> LinearMap for MatrixPowerMap<'_, M> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.repeat(x, y, |m, a, b| m.apply(a, b))
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.repeat(x, y, |m, a, b| m.apply_transpose(a, b))
    }
}

/// The dilation `[[0, M - u u^T], [(M - u u^T)^T, 0]]` acting on `R^{2n}`.
struct DeflatedDilation<'a, M: LinearMap> {
    map: &'a M,
    u: &'a [f64],
}

impl<M: LinearMap> SymmetricOperator for DeflatedDilation<'_, M> {
    fn dim(&self) -> usize {
        2 * self.map.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.map.dim();
        let (top, bottom) = x.split_at(n);
        let (y_top, y_bottom) = y.split_at_mut(n);
        self.map.apply(bottom, y_top);
        let ub = dot(self.u, bottom);
        axpy(-ub, self.u, y_top);
        self.map.apply_transpose(top, y_bottom);
        let ut = dot(self.u, top);
        axpy(-ut, self.u, y_bottom);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(b, v);
        axpy(-c, b, v);
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(MixError::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asymmetry = (a - a.transpose()).amax();
    if asymmetry > SYMMETRY_TOL {
        return Err(MixError::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Eigenvalues in descending order with matching eigenvector columns.
pub fn dense_symmetric_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(a)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok((values, vectors))
}

/// Full real spectrum of a symmetric matrix, descending.
pub fn dense_symmetric_spectrum(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    dense_symmetric_eigen(a).map(|(v, _)| v)
}

/// Result of a single Lanczos run.
#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Largest eigenpair of `op` restricted to the orthogonal complement of the
/// orthonormal vectors in `deflate`.
pub fn lanczos_largest(
    op: &impl SymmetricOperator,
    cfg: &LanczosConfig,
    deflate: &[Vec<f64>],
) -> Result<RitzPair> {
    cfg.validate()?;
    let n = op.dim();
    if n <= deflate.len() {
        return Err(MixError::InvalidArgument(format!(
            "cannot deflate {} directions from a {n}-dimensional operator",
            deflate.len()
        )));
    }
    // A fresh start per deflation depth: reusing the undeflated start would
    // leave no component along a repeated top eigenvalue.
    let seed = cfg
        .seed
        .wrapping_add((deflate.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut q, deflate);
    let qn = norm(&q);
    q.iter_mut().for_each(|v| *v /= qn);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last_residual = f64::INFINITY;

    for j in 0..cfg.max_iter {
        op.apply(&basis[j], &mut w);
        project_out(&mut w, deflate);
        let a = dot(&basis[j], &w);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        if cfg.reorthogonalize {
            // Two passes of classical Gram-Schmidt keep the basis orthogonal to
            // working precision.
            for _ in 0..2 {
                project_out(&mut w, &basis);
                project_out(&mut w, deflate);
            }
        }
        alphas.push(a);
        let b = norm(&w);

        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (top, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        let s = eig.eigenvectors.column(top);
        let residual = (b * s[m - 1]).abs();
        last_residual = residual;
        let exhausted = m >= n - deflate.len();
        if residual <= cfg.tol || exhausted {
            let mut vector = vec![0.0; n];
            for (i, qi) in basis.iter().enumerate() {
                axpy(s[i], qi, &mut vector);
            }
            let vn = norm(&vector);
            vector.iter_mut().for_each(|v| *v /= vn);
            return Ok(RitzPair {
                value: theta,
                vector,
                residual,
                iterations: m,
            });
        }
        betas.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    Err(MixError::NoConvergence {
        iterations: cfg.max_iter,
        residual: last_residual,
    })
}

/// Second-largest eigenvalue of a symmetric positive semi-definite operator
/// such as `S(L) + I`.
///
/// The top eigenpair is found first and then deflated, so a repeated top
/// eigenvalue is reported as its own second copy.
pub fn lanczos_second_eigenvalue(op: &impl SymmetricOperator, cfg: &LanczosConfig) -> Result<f64> {
    if op.dim() < 2 {
        return Err(MixError::InvalidArgument(
            "need at least a 2-dimensional operator".into(),
        ));
    }
    let top = lanczos_largest(op, cfg, &[])?;
    let second = lanczos_largest(op, cfg, &[top.vector])?;
    Ok(second.value)
}

/// Second-largest eigenvalue of a dense symmetric matrix, choosing the dense
/// or Lanczos path by size.
pub fn second_eigenvalue(a: &DMatrix<f64>, cfg: &EigenConfig) -> Result<f64> {
    if a.nrows() < 2 {
        return Err(MixError::InvalidArgument(
            "need at least a 2x2 matrix".into(),
        ));
    }
    if a.nrows() <= cfg.dense_threshold {
        Ok(dense_symmetric_spectrum(a)?[1])
    } else {
        check_symmetric(a)?;
        lanczos_second_eigenvalue(a, &cfg.lanczos)
    }
}

/// Spectral radius of `S(M) - S(u^T u)` for a unit vector `u`, applied
/// matrix-free.
///
/// When `u = sqrt(pi)` and `M = L^k`, `u` is simultaneously the top left and
/// right singular vector of `M`, and the result is `1 - gamma_ddagger(P^k)`.
pub fn deflated_spectral_radius(
    map: &impl LinearMap,
    pi_sqrt: &[f64],
    cfg: &LanczosConfig,
) -> Result<f64> {
    if pi_sqrt.len() != map.dim() {
        return Err(MixError::InvalidArgument(
            "deflation vector has the wrong length".into(),
        ));
    }
    let un = norm(pi_sqrt);
    if (un - 1.0).abs() > 1e-8 {
        return Err(MixError::InvalidArgument(format!(
            "deflation vector must be a unit vector (norm {un})"
        )));
    }
    let op = DeflatedDilation { map, u: pi_sqrt };
    // The spectrum of a dilation is symmetric about zero, so the largest
    // eigenvalue is the spectral radius.
    Ok(lanczos_largest(&op, cfg, &[])?.value.max(0.0))
}

/// Reconstruction `Q diag(values) Q^T`, used to check the dense solver.
pub fn reconstruct(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    vectors * d * vectors.transpose()
}
