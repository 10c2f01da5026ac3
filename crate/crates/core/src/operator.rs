//! Linear-operator abstraction and spectral-norm estimation.
//!
//! The recovery and training stages only need `A·x` and `A^H·y`, so they
//! are written against a small trait instead of a concrete matrix. That
//! lets the same code run on the full forward matrix or on a masked view
//! of it without materializing submatrices.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cmatvec, cmatvec_adjoint};

/// A complex linear map together with its adjoint.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &Array1<Complex64>) -> Array1<Complex64>;
    fn apply_adjoint(&self, y: &Array1<Complex64>) -> Array1<Complex64>;
}

impl LinearOperator for Array2<Complex64> {
    fn nrows(&self) -> usize {
        self.dim().0
    }

    fn ncols(&self) -> usize {
        self.dim().1
    }

    fn apply(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        cmatvec(self, x)
    }

    fn apply_adjoint(&self, y: &Array1<Complex64>) -> Array1<Complex64> {
        cmatvec_adjoint(self, y)
    }
}

/// Settings for the power iteration on `A^H A`.
#[derive(Debug, Clone, Copy)]
pub struct PowerIterationOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-10,
            seed: 0x9e3779b97f4a7c15,
        }
    }
}

/// Estimates the largest eigenvalue of `A^H A` by power iteration.
///
/// The start vector is drawn from a seeded generator so repeated runs give
/// identical estimates. Convergence is declared when the Rayleigh quotient
/// changes by less than `tol` in relative terms between sweeps. A zero
/// operator returns 0 immediately.
pub fn largest_eigenvalue_ata<O: LinearOperator>(
    op: &O,
    opts: PowerIterationOptions,
) -> Result<f64> {
    let n = op.ncols();
    if n == 0 {
        return Err(Error::InvalidParameter("operator has zero columns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = Array1::from_shape_fn(n, |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let norm0 = vec_norm(&v);
    if norm0 == 0.0 {
        return Err(Error::InvalidParameter("start vector is zero".into()));
    }
    v.mapv_inplace(|z| z / norm0);

    let mut lambda = 0.0_f64;
    let mut rel = f64::INFINITY;
    for iter in 0..opts.max_iters {
        let w = op.apply_adjoint(&op.apply(&v));
        // Rayleigh quotient v^H (A^H A) v; v has unit norm.
        let quo: f64 = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let wn = vec_norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        rel = if iter == 0 {
            f64::INFINITY
        } else {
            (quo - lambda).abs() / quo.abs().max(f64::MIN_POSITIVE)
        };
        lambda = quo;
        if rel < opts.tol {
            return Ok(lambda);
        }
        v = w.mapv(|z| z / wn);
    }
    Err(Error::NoConvergence {
        estimate: lambda,
        iters: opts.max_iters,
        rel_change: rel,
    })
}

fn vec_norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
