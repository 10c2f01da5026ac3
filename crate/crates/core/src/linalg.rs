//! Complex dense linear algebra on split real/imaginary planes.
//!
//! Complex matrices are stored as two real `f64` matrices. Products are
//! carried out with four real GEMMs, which keeps the hot paths on the
//! optimized real kernels and matches the parameterization used by the
//! complex-valued network layers (independent real and imaginary weights
//! combined by the complex multiplication rule).
//!
//! All products split the right-hand side into fixed-width column blocks
//! that are dispatched to the rayon pool. The block width is constant, so
//! results are bit-identical regardless of how many worker threads run.

use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;

/// Column-block width used when fanning a GEMM out over the thread pool.
const GEMM_BLOCK_COLS: usize = 64;

/// `c = a · b` for real matrices, parallel over fixed-width column blocks.
pub fn par_dgemm(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows(), "gemm inner dimensions");
    let mut c = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    c.axis_chunks_iter_mut(Axis(1), GEMM_BLOCK_COLS)
        .into_par_iter()
        .zip(b.axis_chunks_iter(Axis(1), GEMM_BLOCK_COLS).into_par_iter())
        .for_each(|(mut c_blk, b_blk)| {
            general_mat_mul(1.0, &a, &b_blk, 0.0, &mut c_blk);
        });
    c
}

/// A complex matrix held as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl CMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            re: Array2::zeros((nrows, ncols)),
            im: Array2::zeros((nrows, ncols)),
        }
    }

    pub fn from_planes(re: Array2<f64>, im: Array2<f64>) -> Self {
        assert_eq!(re.dim(), im.dim(), "re/im planes must agree in shape");
        Self { re, im }
    }

    pub fn from_complex(a: &Array2<Complex64>) -> Self {
        Self {
            re: a.mapv(|z| z.re),
            im: a.mapv(|z| z.im),
        }
    }

    /// Packs a batch of complex column vectors into planes.
    pub fn from_columns(cols: &[Array1<Complex64>]) -> Self {
        assert!(!cols.is_empty());
        let n = cols[0].len();
        let mut re = Array2::zeros((n, cols.len()));
        let mut im = Array2::zeros((n, cols.len()));
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), n);
            for (i, z) in col.iter().enumerate() {
                re[[i, j]] = z.re;
                im[[i, j]] = z.im;
            }
        }
        Self { re, im }
    }

    pub fn to_complex(&self) -> Array2<Complex64> {
        let mut out = Array2::from_elem(self.re.dim(), Complex64::new(0.0, 0.0));
        for ((o, &r), &i) in out.iter_mut().zip(self.re.iter()).zip(self.im.iter()) {
            *o = Complex64::new(r, i);
        }
        out
    }

    /// Copies the given columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> CMat {
        let mut re = Array2::zeros((self.nrows(), indices.len()));
        let mut im = Array2::zeros((self.nrows(), indices.len()));
        for (out_j, &j) in indices.iter().enumerate() {
            re.column_mut(out_j).assign(&self.re.column(j));
            im.column_mut(out_j).assign(&self.im.column(j));
        }
        CMat { re, im }
    }

    pub fn column_to_complex(&self, j: usize) -> Array1<Complex64> {
        let re = self.re.column(j);
        let im = self.im.column(j);
        Array1::from_iter(re.iter().zip(im.iter()).map(|(&r, &i)| Complex64::new(r, i)))
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    /// `self · b` via four real GEMMs.
    pub fn mul(&self, b: &CMat) -> CMat {
        let re = par_dgemm(self.re.view(), b.re.view()) - par_dgemm(self.im.view(), b.im.view());
        let im = par_dgemm(self.re.view(), b.im.view()) + par_dgemm(self.im.view(), b.re.view());
        CMat { re, im }
    }

    /// `self^H · b` (conjugate transpose on the left).
    pub fn adjoint_mul(&self, b: &CMat) -> CMat {
        let re =
            par_dgemm(self.re.t(), b.re.view()) + par_dgemm(self.im.t(), b.im.view());
        let im =
            par_dgemm(self.re.t(), b.im.view()) - par_dgemm(self.im.t(), b.re.view());
        CMat { re, im }
    }

    /// `self · b^H` (conjugate transpose on the right).
    pub fn mul_adjoint(&self, b: &CMat) -> CMat {
        let re = par_dgemm(self.re.view(), b.re.t()) + par_dgemm(self.im.view(), b.im.t());
        let im = par_dgemm(self.im.view(), b.re.t()) - par_dgemm(self.re.view(), b.im.t());
        CMat { re, im }
    }

    pub fn scale(&mut self, s: f64) {
        self.re.mapv_inplace(|v| v * s);
        self.im.mapv_inplace(|v| v * s);
    }

    pub fn add_assign(&mut self, other: &CMat) {
        self.re += &other.re;
        self.im += &other.im;
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let s: f64 = self
            .re
            .iter()
            .zip(self.im.iter())
            .map(|(&r, &i)| r * r + i * i)
            .sum();
        s.sqrt()
    }
}

/// Dense complex matrix–vector product `a · x` (column-major friendly).
pub fn cmatvec(a: &Array2<Complex64>, x: &Array1<Complex64>) -> Array1<Complex64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = Array1::from_elem(a.nrows(), Complex64::new(0.0, 0.0));
    for (k, &xk) in x.iter().enumerate() {
        if xk == Complex64::new(0.0, 0.0) {
            continue;
        }
        let col = a.column(k);
        for (yi, &aik) in y.iter_mut().zip(col.iter()) {
            *yi += aik * xk;
        }
    }
    y
}

/// Dense complex adjoint product `a^H · y`.
pub fn cmatvec_adjoint(a: &Array2<Complex64>, y: &Array1<Complex64>) -> Array1<Complex64> {
    assert_eq!(a.nrows(), y.len());
    let mut out = Array1::from_elem(a.ncols(), Complex64::new(0.0, 0.0));
    for (k, o) in out.iter_mut().enumerate() {
        let col = a.column(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&aik, &yi) in col.iter().zip(y.iter()) {
            acc += aik.conj() * yi;
        }
        *o = acc;
    }
    out
}
