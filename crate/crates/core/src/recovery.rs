//! Sparse reconstruction: complex soft-thresholding, classical FISTA on a
//! (masked) linear model, and the unrolled fixed-depth network whose
//! layers start out as exact FISTA iterations.
//!
//! The unrolled network ties one complex pixel-domain matrix `W`, one
//! complex back-projection matrix `V`, and a per-layer shrink threshold
//! across a fixed number of layers. Initialized as `W = I − μA^H A`,
//! `V = μA^H`, its forward pass reproduces FISTA exactly — the anchor
//! every training experiment is measured against.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::operator::LinearOperator;

/// Complex soft-thresholding: shrinks each modulus by `delta`, floors it
/// at zero, and preserves phase. The proximal operator of `delta·‖·‖₁`.
pub fn complex_softshrink(z: &Array1<Complex64>, delta: f64) -> Result<Array1<Complex64>> {
    if delta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "shrink threshold must be nonnegative, got {delta}"
        )));
    }
    Ok(z.mapv(|v| shrink_one(v, delta)))
}

#[inline]
fn shrink_one(z: Complex64, delta: f64) -> Complex64 {
    let r = z.norm();
    if r > delta {
        z * ((r - delta) / r)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Soft-thresholding on split-plane batches (columns are batch members).
pub fn softshrink_planes(p: &CMat, delta: f64) -> CMat {
    let mut out = CMat::zeros(p.nrows(), p.ncols());
    for ((or, oi), (&pr, &pi)) in out
        .re
        .iter_mut()
        .zip(out.im.iter_mut())
        .zip(p.re.iter().zip(p.im.iter()))
    {
        let r = f64::hypot(pr, pi);
        if r > delta {
            let f = (r - delta) / r;
            *or = pr * f;
            *oi = pi * f;
        }
    }
    out
}

/// Nesterov momentum sequence η₀ = 1, η_{k+1} = (1 + √(1 + 4η_k²))/2.
pub fn eta_sequence(n: usize) -> Vec<f64> {
    let mut etas: Vec<f64> = Vec::with_capacity(n + 1);
    etas.push(1.0);
    for k in 0..n {
        let e = etas[k];
        etas.push((1.0 + (1.0 + 4.0 * e * e).sqrt()) / 2.0);
    }
    etas
}

/// Settings for the iterative solver.
#[derive(Debug, Clone, Copy)]
pub struct FistaConfig {
    /// Iteration budget.
    pub n_iter: usize,
    /// Gradient step μ; must not exceed 1/λ_max(A^H A) for guaranteed
    /// descent.
    pub step: f64,
    /// ℓ₁ regularization weight; the per-iteration shrink is `step × threshold`.
    pub threshold: f64,
    /// Early stop when the relative iterate change drops below this;
    /// zero disables early stopping.
    pub tolerance: f64,
    /// How often (in iterations) to evaluate the divergence safeguard.
    pub check_every: usize,
}

impl FistaConfig {
    pub fn new(n_iter: usize, step: f64, threshold: f64) -> Self {
        Self {
            n_iter,
            step,
            threshold,
            tolerance: 1e-8,
            check_every: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.step <= 0.0 || self.threshold < 0.0 {
            return Err(Error::InvalidParameter(
                "solver needs positive step and nonnegative threshold".into(),
            ));
        }
        Ok(())
    }
}

/// Objective-safeguard multiple: the solve aborts if the objective ever
/// exceeds this factor times the objective at x = 0.
const DIVERGENCE_FACTOR: f64 = 10.0;

/// A row-masked view of a measurement matrix: `apply` zeroes masked rows
/// of `A·x`, `apply_adjoint` ignores masked rows of the input. Equivalent
/// to the dense matrix `diag(mask)·A` without materializing it.
pub struct MaskedOperator<'a> {
    pub a: &'a Array2<Complex64>,
    pub mask: &'a Array1<f64>,
}

impl<'a> MaskedOperator<'a> {
    pub fn new(a: &'a Array2<Complex64>, mask: &'a Array1<f64>) -> Result<Self> {
        if a.nrows() != mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask length {} vs matrix rows {}",
                mask.len(),
                a.nrows()
            )));
        }
        Ok(Self { a, mask })
    }
}

impl LinearOperator for MaskedOperator<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, x: &Array1<Complex64>) -> Array1<Complex64> {
        let mut y = crate::linalg::cmatvec(self.a, x);
        for (yi, &m) in y.iter_mut().zip(self.mask.iter()) {
            *yi *= m;
        }
        y
    }

    fn apply_adjoint(&self, y: &Array1<Complex64>) -> Array1<Complex64> {
        let masked = Array1::from_iter(y.iter().zip(self.mask.iter()).map(|(&z, &m)| z * m));
        crate::linalg::cmatvec_adjoint(self.a, &masked)
    }
}

/// Rows of `a` where `mask` is nonzero, as split planes, plus the indices.
pub fn gather_active_rows(a: &Array2<Complex64>, mask: &Array1<f64>) -> (CMat, Vec<usize>) {
    let active: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut sub = CMat::zeros(active.len(), a.ncols());
    for (r, &i) in active.iter().enumerate() {
        for (c, &z) in a.row(i).iter().enumerate() {
            sub.re[[r, c]] = z.re;
            sub.im[[r, c]] = z.im;
        }
    }
    (sub, active)
}

/// Gathers the listed entries of a complex vector.
pub fn gather_entries(y: &Array1<Complex64>, indices: &[usize]) -> Array1<Complex64> {
    Array1::from_iter(indices.iter().map(|&i| y[i]))
}

fn vec_norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn objective<O: LinearOperator>(op: &O, y: &Array1<Complex64>, x: &Array1<Complex64>, t: f64) -> f64 {
    let ax = op.apply(x);
    let residual: f64 = y
        .iter()
        .zip(ax.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    0.5 * residual + t * x.iter().map(|z| z.norm()).sum::<f64>()
}

fn fista_core<O: LinearOperator>(
    op: &O,
    y: &Array1<Complex64>,
    cfg: &FistaConfig,
    mut on_iterate: impl FnMut(&Array1<Complex64>),
) -> Result<Array1<Complex64>> {
    cfg.validate()?;
    if op.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator rows {} vs measurement length {}",
            op.nrows(),
            y.len()
        )));
    }
    let n = op.ncols();
    let zero = Array1::from_elem(n, Complex64::new(0.0, 0.0));
    let f0 = 0.5 * y.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let safeguard = DIVERGENCE_FACTOR * f0.max(f64::MIN_POSITIVE);
    let shrink_by = cfg.step * cfg.threshold;

    let mut x_prev = zero.clone();
    let mut x_au = zero.clone();
    let mut eta = 1.0_f64;
    let mut best = (f0, zero);
    for iter in 0..cfg.n_iter {
        let grad = op.apply_adjoint(&(op.apply(&x_au) - y));
        let p = &x_au - &grad.mapv(|g| g * cfg.step);
        let x = complex_softshrink(&p, shrink_by)?;
        let eta_new = (1.0 + (1.0 + 4.0 * eta * eta).sqrt()) / 2.0;
        let c = (eta - 1.0) / eta_new;
        x_au = &x + &(&x - &x_prev).mapv(|d| d * c);

        let delta_norm = vec_norm(&(&x - &x_prev));
        let x_norm = vec_norm(&x);
        x_prev = x;
        eta = eta_new;
        on_iterate(&x_prev);

        let is_last = iter + 1 == cfg.n_iter;
        let check = cfg.check_every > 0 && (iter + 1) % cfg.check_every == 0;
        if check || is_last {
            let f = objective(op, y, &x_prev, cfg.threshold);
            if f > safeguard {
                return Err(Error::Divergence {
                    iter: iter + 1,
                    objective: f,
                    safeguard,
                });
            }
            if f < best.0 {
                best = (f, x_prev.clone());
            }
        }
        if cfg.tolerance > 0.0 && delta_norm <= cfg.tolerance * x_norm.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // The momentum sequence is not monotone; hand back the best iterate
    // seen at a checkpoint so the result never loses to the zero vector.
    let f_last = objective(op, y, &x_prev, cfg.threshold);
    if f_last <= best.0 {
        Ok(x_prev)
    } else {
        Ok(best.1)
    }
}

/// Minimizes `½‖y − A·x‖² + threshold·‖x‖₁` (complex ℓ₁ = sum of moduli)
/// by accelerated proximal gradient iterations.
pub fn fista_solve<O: LinearOperator>(
    op: &O,
    y: &Array1<Complex64>,
    cfg: &FistaConfig,
) -> Result<Array1<Complex64>> {
    fista_core(op, y, cfg, |_| {})
}

/// As `fista_solve`, also returning every iterate in order.
pub fn fista_solve_tracked<O: LinearOperator>(
    op: &O,
    y: &Array1<Complex64>,
    cfg: &FistaConfig,
) -> Result<(Array1<Complex64>, Vec<Array1<Complex64>>)> {
    let mut iterates = Vec::new();
    let x = fista_core(op, y, cfg, |xi| iterates.push(xi.clone()))?;
    Ok((x, iterates))
}

/// Batched FISTA over measurement columns sharing one gathered submatrix.
/// Early stopping is global (all columns together) so results stay a pure
/// function of the inputs regardless of batch composition order.
pub fn fista_solve_batch(a_sub: &CMat, y_sub: &CMat, cfg: &FistaConfig) -> Result<CMat> {
    cfg.validate()?;
    if a_sub.nrows() != y_sub.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "submatrix rows {} vs measurement rows {}",
            a_sub.nrows(),
            y_sub.nrows()
        )));
    }
    let n = a_sub.ncols();
    let b = y_sub.ncols();
    let shrink_by = cfg.step * cfg.threshold;
    let f0 = 0.5 * (y_sub.norm().powi(2));
    let safeguard = DIVERGENCE_FACTOR * f0.max(f64::MIN_POSITIVE);

    let batch_objective = |x: &CMat| -> f64 {
        let mut ax = a_sub.mul(x);
        ax.re -= &y_sub.re;
        ax.im -= &y_sub.im;
        let l1: f64 = x
            .re
            .iter()
            .zip(x.im.iter())
            .map(|(&r, &i)| f64::hypot(r, i))
            .sum();
        0.5 * ax.norm().powi(2) + cfg.threshold * l1
    };

    let mut x_prev = CMat::zeros(n, b);
    let mut x_au = CMat::zeros(n, b);
    let mut eta = 1.0_f64;
    let mut best: (f64, Option<CMat>) = (f0, None);
    for iter in 0..cfg.n_iter {
        let mut residual = a_sub.mul(&x_au);
        residual.re -= &y_sub.re;
        residual.im -= &y_sub.im;
        let mut p = a_sub.adjoint_mul(&residual);
        p.scale(-cfg.step);
        p.add_assign(&x_au);
        let x = softshrink_planes(&p, shrink_by);

        let eta_new = (1.0 + (1.0 + 4.0 * eta * eta).sqrt()) / 2.0;
        let c = (eta - 1.0) / eta_new;
        let mut step_dir = x.clone();
        step_dir.re -= &x_prev.re;
        step_dir.im -= &x_prev.im;
        let change = step_dir.norm();
        step_dir.scale(c);
        x_au = x.clone();
        x_au.add_assign(&step_dir);

        let x_norm = x.norm();
        x_prev = x;
        eta = eta_new;

        let is_last = iter + 1 == cfg.n_iter;
        if (cfg.check_every > 0 && (iter + 1) % cfg.check_every == 0) || is_last {
            let f = batch_objective(&x_prev);
            if f > safeguard {
                return Err(Error::Divergence {
                    iter: iter + 1,
                    objective: f,
                    safeguard,
                });
            }
            if f < best.0 {
                best = (f, Some(x_prev.clone()));
            }
        }
        if cfg.tolerance > 0.0 && change <= cfg.tolerance * x_norm.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let f_last = batch_objective(&x_prev);
    match best {
        (f_best, Some(x_best)) if f_best < f_last => Ok(x_best),
        _ => Ok(x_prev),
    }
}

/// The unrolled reconstructor: tied complex matrices `W` (pixel → pixel)
/// and `V` (measurement → pixel) shared across layers, plus one trainable
/// shrink threshold per layer.
#[derive(Debug, Clone)]
pub struct UnrolledNet {
    pub w: CMat,
    pub v: CMat,
    pub delta: Array1<f64>,
}

impl UnrolledNet {
    pub fn n_layer(&self) -> usize {
        self.delta.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_meas(&self) -> usize {
        self.v.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.nrows() != self.w.ncols() {
            return Err(Error::DimensionMismatch("W must be square".into()));
        }
        if self.v.nrows() != self.w.nrows() {
            return Err(Error::DimensionMismatch(
                "V rows must match W dimension".into(),
            ));
        }
        if self.delta.is_empty() {
            return Err(Error::InvalidParameter("need at least one layer".into()));
        }
        if self.delta.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::InvalidParameter(
                "layer thresholds must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Classical initialization: `W = I − μA^H A`, `V = μA^H`, every layer
    /// threshold set to `delta0`. With `delta0 = μ·λ_reg` the forward pass
    /// is exactly FISTA with step μ and ℓ₁ weight λ_reg.
    pub fn fista_init(a: &CMat, mu: f64, n_layer: usize, delta0: f64) -> Result<Self> {
        if mu <= 0.0 || n_layer == 0 || delta0 < 0.0 {
            return Err(Error::InvalidParameter(
                "initialization needs μ > 0, n_layer ≥ 1, delta0 ≥ 0".into(),
            ));
        }
        let gram = a.adjoint_mul(a);
        let n = gram.nrows();
        let mut w_re = gram.re.mapv(|v| -mu * v);
        for i in 0..n {
            w_re[[i, i]] += 1.0;
        }
        let w_im = gram.im.mapv(|v| -mu * v);
        let v_re = a.re.t().mapv(|v| mu * v);
        let v_im = a.im.t().mapv(|v| -mu * v);
        let net = Self {
            w: CMat::from_planes(w_re, w_im),
            v: CMat::from_planes(v_re, v_im),
            delta: Array1::from_elem(n_layer, delta0),
        };
        net.validate()?;
        Ok(net)
    }
}

/// Everything the reverse pass needs from one forward pass: per layer, the
/// momentum combination fed in (`x_au`), the pre-activation, the
/// post-activation, and the momentum coefficient used to build the next
/// combination. The back-projected input `v·y_s` is shared by all layers.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub x_au: Vec<CMat>,
    pub pre: Vec<CMat>,
    pub post: Vec<CMat>,
    pub coeff: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Runs the unrolled forward pass on a batch of masked measurements
/// (columns), starting from zero with unit momentum.
pub fn clfista_forward_batch(net: &UnrolledNet, y_s: &CMat) -> Result<(CMat, ForwardTape)> {
    net.validate()?;
    if y_s.nrows() != net.n_meas() {
        return Err(Error::DimensionMismatch(format!(
            "measurement rows {} vs V columns {}",
            y_s.nrows(),
            net.n_meas()
        )));
    }
    let n = net.n_pixels();
    let b = y_s.ncols();
    let n_layer = net.n_layer();
    let vy = net.v.mul(y_s);

    let mut tape = ForwardTape {
        x_au: Vec::with_capacity(n_layer),
        pre: Vec::with_capacity(n_layer),
        post: Vec::with_capacity(n_layer),
        coeff: Vec::with_capacity(n_layer),
        eta: Vec::with_capacity(n_layer),
    };
    let mut x_prev = CMat::zeros(n, b);
    let mut x_au = CMat::zeros(n, b);
    let mut eta = 1.0_f64;
    for layer in 0..n_layer {
        let mut p = net.w.mul(&x_au);
        p.add_assign(&vy);
        let x = softshrink_planes(&p, net.delta[layer]);
        let eta_new = (1.0 + (1.0 + 4.0 * eta * eta).sqrt()) / 2.0;
        let c = (eta - 1.0) / eta_new;

        tape.x_au.push(x_au);
        tape.pre.push(p);
        tape.post.push(x.clone());
        tape.coeff.push(c);
        tape.eta.push(eta_new);

        let mut next = x.clone();
        next.scale(1.0 + c);
        let mut back = x_prev.clone();
        back.scale(c);
        next.re -= &back.re;
        next.im -= &back.im;
        x_au = next;
        x_prev = x;
        eta = eta_new;
    }
    Ok((x_prev, tape))
}

/// Single-vector forward pass (batch of one).
pub fn clfista_forward(
    net: &UnrolledNet,
    y_s: &Array1<Complex64>,
) -> Result<(Array1<Complex64>, ForwardTape)> {
    let y_planes = CMat::from_columns(&[y_s.clone()]);
    let (x, tape) = clfista_forward_batch(net, &y_planes)?;
    Ok((x.column_to_complex(0), tape))
}

/// Inference-only forward pass: identical iterates, no tape retained, so
/// large evaluation batches stay within a few working matrices.
pub fn clfista_infer_batch(net: &UnrolledNet, y_s: &CMat) -> Result<CMat> {
    net.validate()?;
    if y_s.nrows() != net.n_meas() {
        return Err(Error::DimensionMismatch(format!(
            "measurement rows {} vs V columns {}",
            y_s.nrows(),
            net.n_meas()
        )));
    }
    let n = net.n_pixels();
    let b = y_s.ncols();
    let vy = net.v.mul(y_s);
    let mut x_prev = CMat::zeros(n, b);
    let mut x_au = CMat::zeros(n, b);
    let mut eta = 1.0_f64;
    for layer in 0..net.n_layer() {
        let mut p = net.w.mul(&x_au);
        p.add_assign(&vy);
        let x = softshrink_planes(&p, net.delta[layer]);
        let eta_new = (1.0 + (1.0 + 4.0 * eta * eta).sqrt()) / 2.0;
        let c = (eta - 1.0) / eta_new;
        let mut next = x.clone();
        next.scale(1.0 + c);
        let mut back = x_prev.clone();
        back.scale(c);
        next.re -= &back.re;
        next.im -= &back.im;
        x_au = next;
        x_prev = x;
        eta = eta_new;
    }
    Ok(x_prev)
}
