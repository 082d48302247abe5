//! Sparse linear algebra: direct factorizations, the augmented least-squares
//! solves of the wavefield and model subproblems, and the power iteration
//! that estimates the largest eigenvalue of the data-space normal operator.

mod cg;
mod multifrontal;
mod ordering;

pub use cg::conjugate_gradient;
pub use multifrontal::{FactorKind, Factorization};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};
use crate::sparse::CsrMatrix;

/// How Hermitian positive definite systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Backend {
    Direct,
    ConjugateGradient {
        rel_tol: f64,
        /// Iteration cap as a multiple of the system size.
        max_iter_factor: usize,
    },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Direct
    }
}

impl Backend {
    pub fn conjugate_gradient() -> Self {
        Backend::ConjugateGradient {
            rel_tol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

/// LU factorization of a general square sparse matrix.
pub fn factor<T: Scalar>(m: &CsrMatrix<T>) -> Result<Factorization<T>> {
    Factorization::lu(m)
}

/// A prepared Hermitian positive definite solver.
#[derive(Debug, Clone)]
pub enum HpdSolver<T> {
    Direct(Factorization<T>),
    Iterative {
        matrix: CsrMatrix<T>,
        rel_tol: f64,
        max_iter: usize,
    },
}

impl<T: Scalar> HpdSolver<T> {
    pub fn new(matrix: CsrMatrix<T>, backend: Backend) -> Result<Self> {
        match backend {
            Backend::Direct => Ok(HpdSolver::Direct(Factorization::ldlh(&matrix)?)),
            Backend::ConjugateGradient {
                rel_tol,
                max_iter_factor,
            } => {
                let max_iter = max_iter_factor.saturating_mul(matrix.nrows()).max(1);
                Ok(HpdSolver::Iterative {
                    matrix,
                    rel_tol,
                    max_iter,
                })
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        match self {
            HpdSolver::Direct(f) => Ok(f.solve(b)),
            HpdSolver::Iterative {
                matrix,
                rel_tol,
                max_iter,
            } => conjugate_gradient(matrix, b, *rel_tol, *max_iter),
        }
    }
}

/// The wavefield-reconstruction normal system `l0 P^T P + l1 A^H A`, factored
/// once and reused for every source sharing the operator `A`.
#[derive(Debug, Clone)]
pub struct WavefieldNormalSystem {
    a: CsrMatrix<Complex64>,
    receivers: Vec<usize>,
    lambda0: f64,
    lambda1: f64,
    matrix: CsrMatrix<Complex64>,
    solver: HpdSolver<Complex64>,
}

impl WavefieldNormalSystem {
    pub fn new(
        a: &CsrMatrix<Complex64>,
        receivers: &[usize],
        lambda0: f64,
        lambda1: f64,
        backend: Backend,
    ) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda1 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "penalty weights must be positive (lambda0 = {lambda0}, lambda1 = {lambda1})"
            )));
        }
        let n = a.nrows();
        if let Some(&bad) = receivers.iter().find(|&&r| r >= n) {
            return Err(Error::InvalidInput(format!("receiver index {bad} outside {n} nodes")));
        }
        let mut diag = vec![Complex64::new(0.0, 0.0); n];
        for &r in receivers {
            diag[r] += lambda0;
        }
        let matrix = a.gram().scaled(Complex64::new(lambda1, 0.0)).add_diagonal(&diag)?;
        let solver = HpdSolver::new(matrix.clone(), backend)?;
        Ok(Self {
            a: a.clone(),
            receivers: receivers.to_vec(),
            lambda0,
            lambda1,
            matrix,
            solver,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    /// Right-hand side `l0 P^T d + l1 A^H s`.
    pub fn rhs(&self, rhs_data: &[Complex64], rhs_src: &[Complex64]) -> Result<Vec<Complex64>> {
        if rhs_data.len() != self.receivers.len() {
            return Err(Error::DimensionMismatch {
                what: "data right-hand side",
                expected: self.receivers.len(),
                got: rhs_data.len(),
            });
        }
        if rhs_src.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                what: "source right-hand side",
                expected: self.a.nrows(),
                got: rhs_src.len(),
            });
        }
        let mut g = self.a.conj_transpose_mul_vec(rhs_src);
        g.iter_mut().for_each(|v| *v *= self.lambda1);
        for (&r, &d) in self.receivers.iter().zip(rhs_data) {
            g[r] += d * self.lambda0;
        }
        Ok(g)
    }

    /// Minimizer of `l0 |P u - d|^2 + l1 |A u - s|^2`.
    pub fn solve(&self, rhs_data: &[Complex64], rhs_src: &[Complex64]) -> Result<Vec<Complex64>> {
        let g = self.rhs(rhs_data, rhs_src)?;
        self.solver.solve(&g)
    }
}

/// One-shot form of [`WavefieldNormalSystem`].
pub fn solve_wavefield_normal(
    a: &CsrMatrix<Complex64>,
    receivers: &[usize],
    lambda0: f64,
    lambda1: f64,
    rhs_data: &[Complex64],
    rhs_src: &[Complex64],
    backend: Backend,
) -> Result<Vec<Complex64>> {
    WavefieldNormalSystem::new(a, receivers, lambda0, lambda1, backend)?.solve(rhs_data, rhs_src)
}

/// Solves the real symmetric positive definite model system `H x = g`.
pub fn solve_model_normal(h: &CsrMatrix<f64>, g: &[f64], backend: Backend) -> Result<Vec<f64>> {
    if g.len() != h.nrows() {
        return Err(Error::DimensionMismatch {
            what: "model right-hand side",
            expected: h.nrows(),
            got: g.len(),
        });
    }
    HpdSolver::new(h.clone(), backend)?.solve(g)
}

/// Rayleigh-quotient estimate of the largest eigenvalue of
/// `A^{-H} P^T P A^{-1}` after `iters` power steps from a seeded start.
pub fn power_iteration_xi(
    a_fact: &Factorization<Complex64>,
    receivers: &[usize],
    iters: usize,
    seed: u64,
) -> Result<f64> {
    Ok(*power_iteration_history(a_fact, receivers, iters, seed)?
        .last()
        .expect("at least one iteration"))
}

/// Rayleigh quotients of every power step (nondecreasing for this PSD operator).
pub fn power_iteration_history(
    a_fact: &Factorization<Complex64>,
    receivers: &[usize],
    iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if iters == 0 {
        return Err(Error::InvalidInput("power iteration needs at least one step".into()));
    }
    let n = a_fact.dim();
    if let Some(&bad) = receivers.iter().find(|&&r| r >= n) {
        return Err(Error::InvalidInput(format!("receiver index {bad} outside {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut history = Vec::with_capacity(iters);
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..iters {
        let y = a_fact.solve(&x);
        z.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for &r in receivers {
            z[r] += y[r];
        }
        // Rayleigh quotient <x, N x> = |P A^{-1} x|^2 for unit x
        let rq: f64 = receivers.iter().map(|&r| y[r].norm_sqr()).sum();
        history.push(rq);
        let w = a_fact.solve_conj_transpose(&z);
        let nw = norm2(&w);
        if nw == 0.0 {
            break;
        }
        x = w.into_iter().map(|v| v / nw).collect();
    }
    Ok(history)
}
