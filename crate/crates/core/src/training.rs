//! Joint training of the selection logits and the unrolled reconstructor.
//!
//! Each iteration anneals the Gumbel temperature, draws one hard/soft
//! selection per axis, masks a measurement batch with the hard Kronecker
//! mask, runs the unrolled forward pass, and backpropagates an L1 image
//! loss. The discrete top-K step is handled straight-through: the forward
//! pass uses the hard mask, the backward pass substitutes the Jacobian of
//! the tempered softmax. All parameters update with Adam; layer
//! thresholds are clamped nonnegative after every step.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::recovery::{clfista_forward_batch, ForwardTape, UnrolledNet};
use crate::subsampling::{
    kron_mask, sample_selection, softmax_scaled, SelectionSample, SelectionState,
};

/// Hyperparameters of the training loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub n_iter: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-block multipliers on `lr`. Adam's per-entry steps are absolute,
    /// so blocks whose natural magnitudes differ by orders of magnitude
    /// need their own rates: selection logits move O(1), the network
    /// matrices only tolerate small spectral drift per step, and the
    /// layer thresholds live at the scale of their own initialization
    /// (pass that scale here to make their steps effectively relative).
    pub lr_scale_theta: f64,
    pub lr_scale_net: f64,
    pub lr_scale_delta: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub gamma_init: f64,
    pub gamma_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_iter: 3000,
            batch_size: 16,
            lr: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            gamma_init: 5.0,
            gamma_end: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_init > self.gamma_end && self.gamma_end > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature schedule needs gamma_init > gamma_end > 0, got {} and {}",
                self.gamma_init, self.gamma_end
            )));
        }
        if self.lr <= 0.0 || self.n_iter == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "training needs positive lr, n_iter, and batch_size".into(),
            ));
        }
        Ok(())
    }
}

/// Linearly annealed temperature for iteration `i` (1-based):
/// `γ(i) = γ_init − (i−1)·Δγ` with `Δγ = (γ_init − γ_end)/N_iter`, so the
/// first iteration runs at `γ_init` and the last at `γ_end + Δγ`.
pub fn temperature(i: usize, cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    if i == 0 || i > cfg.n_iter {
        return Err(Error::InvalidParameter(format!(
            "iteration index {i} outside 1..={}",
            cfg.n_iter
        )));
    }
    let dgamma = (cfg.gamma_init - cfg.gamma_end) / cfg.n_iter as f64;
    Ok(cfg.gamma_init - (i - 1) as f64 * dgamma)
}

/// Sum of complex moduli of the elementwise difference.
pub fn l1_loss(x: &Array1<Complex64>, x_hat: &Array1<Complex64>) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "loss inputs of lengths {} and {}",
            x.len(),
            x_hat.len()
        )));
    }
    Ok(x.iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b).norm())
        .sum())
}

fn l1_loss_planes(target: &CMat, output: &CMat) -> f64 {
    target
        .re
        .iter()
        .zip(target.im.iter())
        .zip(output.re.iter().zip(output.im.iter()))
        .map(|((&tr, &ti), (&or, &oi))| f64::hypot(or - tr, oi - ti))
        .sum()
}

/// Gradients for every trainable quantity, shaped exactly like the
/// parameters they belong to.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub d_theta_t: Array1<f64>,
    pub d_theta_r: Array1<f64>,
    pub d_theta_f: Array1<f64>,
    pub d_w_re: Array2<f64>,
    pub d_w_im: Array2<f64>,
    pub d_v_re: Array2<f64>,
    pub d_v_im: Array2<f64>,
    pub d_delta: Array1<f64>,
}

impl GradientBundle {
    fn zeros_like(net: &UnrolledNet, sel: &SelectionState) -> Self {
        Self {
            d_theta_t: Array1::zeros(sel.theta_t.len()),
            d_theta_r: Array1::zeros(sel.theta_r.len()),
            d_theta_f: Array1::zeros(sel.theta_f.len()),
            d_w_re: Array2::zeros(net.w.re.dim()),
            d_w_im: Array2::zeros(net.w.im.dim()),
            d_v_re: Array2::zeros(net.v.re.dim()),
            d_v_im: Array2::zeros(net.v.im.dim()),
            d_delta: Array1::zeros(net.delta.len()),
        }
    }
}

/// Packed-gradient seed of the mean-over-batch L1 loss: per element,
/// `(x̂ − x)/(|x̂ − x|·B)`, zero where the difference vanishes.
fn l1_seed(target: &CMat, output: &CMat) -> CMat {
    let b = output.ncols().max(1) as f64;
    let mut seed = CMat::zeros(output.nrows(), output.ncols());
    for (((sr, si), (&tr, &ti)), (&or, &oi)) in seed
        .re
        .iter_mut()
        .zip(seed.im.iter_mut())
        .zip(target.re.iter().zip(target.im.iter()))
        .zip(output.re.iter().zip(output.im.iter()))
    {
        let dr = or - tr;
        let di = oi - ti;
        let r = f64::hypot(dr, di);
        if r > 0.0 {
            *sr = dr / (r * b);
            *si = di / (r * b);
        }
    }
    seed
}

/// Backward pass of the soft-threshold activation. Returns the input
/// gradient and the threshold gradient; entries at or below the threshold
/// contribute nothing (the subgradient at the flat region is zero).
fn softshrink_backward(pre: &CMat, delta: f64, g_out: &CMat) -> (CMat, f64) {
    let mut g_in = CMat::zeros(pre.nrows(), pre.ncols());
    let mut d_delta = 0.0;
    for (((gr_in, gi_in), (&pr, &pi)), (&gr, &gi)) in g_in
        .re
        .iter_mut()
        .zip(g_in.im.iter_mut())
        .zip(pre.re.iter().zip(pre.im.iter()))
        .zip(g_out.re.iter().zip(g_out.im.iter()))
    {
        let r = f64::hypot(pr, pi);
        if r > delta {
            let factor = 1.0 - delta / r;
            let radial = (pr * gr + pi * gi) / r;
            let scale = delta * radial / (r * r);
            *gr_in = factor * gr + scale * pr;
            *gi_in = factor * gi + scale * pi;
            d_delta -= radial;
        }
    }
    (g_in, d_delta)
}

/// The per-iteration selection triple: soft, hard, and noise per axis.
#[derive(Debug, Clone)]
pub struct SelectionDraw {
    pub t: SelectionSample,
    pub r: SelectionSample,
    pub f: SelectionSample,
    pub gamma: f64,
}

/// Straight-through Jacobian-vector product for one axis: treats the hard
/// vector's gradient as the soft vector's, then applies the tempered
/// softmax Jacobian `J^T g = (s ⊙ g − (s·g)·s)/γ`.
fn softmax_jvp(soft: &Array1<f64>, g_soft: &Array1<f64>, gamma: f64) -> Array1<f64> {
    let inner: f64 = soft
        .iter()
        .zip(g_soft.iter())
        .map(|(&s, &g)| s * g)
        .sum();
    Array1::from_iter(
        soft.iter()
            .zip(g_soft.iter())
            .map(|(&s, &g)| s * (g - inner) / gamma),
    )
}

/// Reverse-mode pass through the unrolled network and the straight-through
/// selection, for one batch.
///
/// `y_batch` holds the unmasked measurements (columns); `y_s` is the same
/// batch with the iteration's hard mask applied; `tape` came from the
/// forward pass on `y_s`. The returned bundle contains exact gradients for
/// the network parameters and straight-through gradients for the logits.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    net: &UnrolledNet,
    sel: &SelectionState,
    draw: &SelectionDraw,
    y_batch: &CMat,
    y_s: &CMat,
    tape: &ForwardTape,
    target: &CMat,
    output: &CMat,
) -> Result<GradientBundle> {
    let n_layer = net.n_layer();
    if tape.pre.len() != n_layer {
        return Err(Error::InvalidParameter(format!(
            "tape holds {} layers but the network has {n_layer}",
            tape.pre.len()
        )));
    }
    if y_batch.nrows() != net.n_meas() || y_batch.ncols() != output.ncols() {
        return Err(Error::DimensionMismatch(
            "measurement batch shape does not match the network".into(),
        ));
    }
    let mut bundle = GradientBundle::zeros_like(net, sel);
    let seed = l1_seed(target, output);

    // Reverse sweep over layers. `g_a` uses 1-based layer slots: entry j
    // holds the gradient with respect to the momentum combination fed into
    // layer j. Only the two most recent slots are alive at a time.
    let mut g_a_next: Option<CMat> = None; // slot j+1
    let mut g_a_next2: Option<CMat> = None; // slot j+2
    let mut g_p_sum = CMat::zeros(net.n_pixels(), y_s.ncols());
    for j in (0..n_layer).rev() {
        // Gradient with respect to this layer's post-activation x_j.
        let mut g_x = if j == n_layer - 1 {
            seed.clone()
        } else {
            CMat::zeros(net.n_pixels(), y_s.ncols())
        };
        if let Some(ga) = &g_a_next {
            // x_j enters a_{j+1} with coefficient (1 + c_j).
            let c = tape.coeff[j];
            let mut term = ga.clone();
            term.scale(1.0 + c);
            g_x.add_assign(&term);
        }
        if let Some(ga) = &g_a_next2 {
            // x_j enters a_{j+2} with coefficient −c_{j+1}.
            let c = tape.coeff[j + 1];
            let mut term = ga.clone();
            term.scale(-c);
            g_x.add_assign(&term);
        }

        let (g_p, d_delta_j) = softshrink_backward(&tape.pre[j], net.delta[j], &g_x);
        bundle.d_delta[j] = d_delta_j;

        // W gradient: p_j = W·a_j + V·y_s ⇒ dW += g_p · a_j^H.
        let gw = g_p.mul_adjoint(&tape.x_au[j]);
        bundle.d_w_re += &gw.re;
        bundle.d_w_im += &gw.im;

        g_p_sum.add_assign(&g_p);
        let g_a = net.w.adjoint_mul(&g_p);
        g_a_next2 = g_a_next.take();
        g_a_next = Some(g_a);
    }

    // V gradient: every layer adds V·y_s, so dV = (Σ_j g_p_j) · y_s^H.
    let gv = g_p_sum.mul_adjoint(y_s);
    bundle.d_v_re += &gv.re;
    bundle.d_v_im += &gv.im;

    // Mask gradient: y_s[k,b] = s̃[k]·y[k,b] with s̃ real, so
    // dL/ds̃[k] = Σ_b Re( conj(y[k,b]) · g_ys[k,b] ).
    let g_ys = net.v.adjoint_mul(&g_p_sum);
    let n_t = sel.theta_t.len();
    let n_r = sel.theta_r.len();
    let n_f = sel.theta_f.len();
    let mut g_mask = Array1::<f64>::zeros(n_t * n_r * n_f);
    for k in 0..g_mask.len() {
        let mut acc = 0.0;
        for b in 0..y_batch.ncols() {
            acc += y_batch.re[[k, b]] * g_ys.re[[k, b]] + y_batch.im[[k, b]] * g_ys.im[[k, b]];
        }
        g_mask[k] = acc;
    }

    // Split the combined-mask gradient onto the axes. The mask factors as
    // s̃[(i,j,f)] = s_t[i]·s_r[j]·s_f[f]; each axis sees the sum over the
    // other two axes at their hard values.
    let (s_t, s_r, s_f) = (&draw.t.hard, &draw.r.hard, &draw.f.hard);
    let mut g_hard_t = Array1::<f64>::zeros(n_t);
    let mut g_hard_r = Array1::<f64>::zeros(n_r);
    let mut g_hard_f = Array1::<f64>::zeros(n_f);
    let mut row = 0;
    for i in 0..n_t {
        for j in 0..n_r {
            for f in 0..n_f {
                let g = g_mask[row];
                g_hard_t[i] += g * s_r[j] * s_f[f];
                g_hard_r[j] += g * s_t[i] * s_f[f];
                g_hard_f[f] += g * s_t[i] * s_r[j];
                row += 1;
            }
        }
    }

    // Straight-through: pass each hard gradient to the soft sample and
    // apply the tempered-softmax Jacobian to reach the logits.
    bundle.d_theta_t = softmax_jvp(&draw.t.soft, &g_hard_t, draw.gamma);
    bundle.d_theta_r = softmax_jvp(&draw.r.soft, &g_hard_r, draw.gamma);
    bundle.d_theta_f = softmax_jvp(&draw.f.soft, &g_hard_f, draw.gamma);
    Ok(bundle)
}

/// First/second-moment accumulators for one parameter block.
#[derive(Debug, Clone)]
struct AdamBlock {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamBlock {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step<'a, P, G>(&mut self, params: P, grads: G, t: usize, cfg: &TrainConfig)
    where
        P: Iterator<Item = &'a mut f64>,
        G: Iterator<Item = f64>,
    {
        let (b1, b2) = cfg.adam_betas;
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        for ((p, g), (m, v)) in params
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Adam state across all trainable blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    theta_t: AdamBlock,
    theta_r: AdamBlock,
    theta_f: AdamBlock,
    w_re: AdamBlock,
    w_im: AdamBlock,
    v_re: AdamBlock,
    v_im: AdamBlock,
    delta: AdamBlock,
    /// Completed steps (for bias correction).
    pub t: usize,
}

impl AdamState {
    pub fn new(net: &UnrolledNet, sel: &SelectionState) -> Self {
        Self {
            theta_t: AdamBlock::new(sel.theta_t.len()),
            theta_r: AdamBlock::new(sel.theta_r.len()),
            theta_f: AdamBlock::new(sel.theta_f.len()),
            w_re: AdamBlock::new(net.w.re.len()),
            w_im: AdamBlock::new(net.w.im.len()),
            v_re: AdamBlock::new(net.v.re.len()),
            v_im: AdamBlock::new(net.v.im.len()),
            delta: AdamBlock::new(net.delta.len()),
            t: 0,
        }
    }
}

/// One Adam update over every trainable block, with bias correction.
/// Layer thresholds are clamped to zero from below afterwards; axes listed
/// in `freeze_axes` (any of 't', 'r', 'f') keep their logits fixed.
pub fn adam_step(
    net: &mut UnrolledNet,
    sel: &mut SelectionState,
    grads: &GradientBundle,
    state: &mut AdamState,
    cfg: &TrainConfig,
    freeze_axes: &[char],
) {
    state.t += 1;
    let t = state.t;
    if !freeze_axes.contains(&'t') {
        state
            .theta_t
            .step(sel.theta_t.iter_mut(), grads.d_theta_t.iter().cloned(), t, cfg);
    }
    if !freeze_axes.contains(&'r') {
        state
            .theta_r
            .step(sel.theta_r.iter_mut(), grads.d_theta_r.iter().cloned(), t, cfg);
    }
    if !freeze_axes.contains(&'f') {
        state
            .theta_f
            .step(sel.theta_f.iter_mut(), grads.d_theta_f.iter().cloned(), t, cfg);
    }
    state
        .w_re
        .step(net.w.re.iter_mut(), grads.d_w_re.iter().cloned(), t, cfg);
    state
        .w_im
        .step(net.w.im.iter_mut(), grads.d_w_im.iter().cloned(), t, cfg);
    state
        .v_re
        .step(net.v.re.iter_mut(), grads.d_v_re.iter().cloned(), t, cfg);
    state
        .v_im
        .step(net.v.im.iter_mut(), grads.d_v_im.iter().cloned(), t, cfg);
    state
        .delta
        .step(net.delta.iter_mut(), grads.d_delta.iter().cloned(), t, cfg);
    net.delta.mapv_inplace(|d| d.max(0.0));
}

/// Shannon entropy (nats) of the softmax of a logits vector at unit
/// temperature — the telemetry used to watch selections sharpen.
pub fn logits_entropy(theta: &Array1<f64>) -> f64 {
    let p = softmax_scaled(theta, 1.0);
    -p.iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.ln())
        .sum::<f64>()
}

/// One line of the training log.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub iteration: usize,
    pub gamma: f64,
    pub loss: f64,
    pub entropy_t: f64,
    pub entropy_r: f64,
    pub entropy_f: f64,
    pub hard_t: Vec<usize>,
    pub hard_r: Vec<usize>,
    pub hard_f: Vec<usize>,
}

impl TrainRecord {
    pub fn to_line(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "iter={} gamma={:.6} loss={:e} entropy_t={:.6} entropy_r={:.6} entropy_f={:.6} hard_t={} hard_r={} hard_f={}",
            self.iteration,
            self.gamma,
            self.loss,
            self.entropy_t,
            self.entropy_r,
            self.entropy_f,
            join(&self.hard_t),
            join(&self.hard_r),
            join(&self.hard_f)
        )
    }
}

/// Which axes learn their logits; the others stay pinned to fixed masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// All three axes learn jointly.
    Joint,
    /// Only the transmitter axis learns.
    TransmitterOnly,
    /// Only the receiver axis learns.
    ReceiverOnly,
    /// Only the frequency axis learns.
    FrequencyOnly,
}

impl TrainMode {
    fn frozen_axes(self) -> &'static [char] {
        match self {
            TrainMode::Joint => &[],
            TrainMode::TransmitterOnly => &['r', 'f'],
            TrainMode::ReceiverOnly => &['t', 'f'],
            TrainMode::FrequencyOnly => &['t', 'r'],
        }
    }
}

/// Fixed axis masks used for the non-learned axes of single-axis modes.
#[derive(Debug, Clone)]
pub struct PinnedAxes {
    pub t: Option<Array1<f64>>,
    pub r: Option<Array1<f64>>,
    pub f: Option<Array1<f64>>,
}

impl PinnedAxes {
    pub fn none() -> Self {
        Self {
            t: None,
            r: None,
            f: None,
        }
    }
}

fn pinned_sample(mask: &Array1<f64>) -> SelectionSample {
    SelectionSample {
        soft: mask.clone(),
        hard: mask.clone(),
        gumbel: Array1::zeros(mask.len()),
    }
}

/// The jointly trained artifacts plus the per-iteration log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub selection: SelectionState,
    pub net: UnrolledNet,
    pub log: Vec<TrainRecord>,
}

/// Runs the full training loop.
///
/// `measurements` are the unmasked acquisition vectors; `images` the
/// matching ground-truth complex images. Batches cycle through the data in
/// order (wrapping), one shared selection draw per batch. Pinned axes are
/// stored back as binary logits so the returned selection infers the
/// pinned pattern. Training is a pure function of its arguments; a
/// non-finite loss aborts with a diagnostic.
pub fn train(
    mut net: UnrolledNet,
    mut sel: SelectionState,
    mode: TrainMode,
    pinned: &PinnedAxes,
    measurements: &[Array1<Complex64>],
    images: &[Array1<Complex64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net.validate()?;
    sel.validate()?;
    if measurements.is_empty() || measurements.len() != images.len() {
        return Err(Error::InvalidParameter(format!(
            "need matching nonempty data, got {} measurements and {} images",
            measurements.len(),
            images.len()
        )));
    }
    for (axis, tag, pin, n, m) in [
        ("transmitter", 't', &pinned.t, sel.theta_t.len(), sel.m_t),
        ("receiver", 'r', &pinned.r, sel.theta_r.len(), sel.m_r),
        ("frequency", 'f', &pinned.f, sel.theta_f.len(), sel.m_f),
    ] {
        if let Some(mask) = pin {
            if !mode.frozen_axes().contains(&tag) {
                return Err(Error::InvalidParameter(format!(
                    "{axis} axis is pinned but the training mode would update it"
                )));
            }
            if mask.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "pinned {axis} mask length {} vs axis size {n}",
                    mask.len()
                )));
            }
            let pop = mask.iter().filter(|&&v| v == 1.0).count();
            if pop != m || mask.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "pinned {axis} mask must be binary with {m} active entries"
                )));
            }
        }
    }

    // A pinned axis's stored logits become the pin itself; the top-m of a
    // binary vector is the vector, so the returned selection reproduces
    // the trained pattern at inference time.
    if let Some(mask) = &pinned.t {
        sel.theta_t = mask.clone();
    }
    if let Some(mask) = &pinned.r {
        sel.theta_r = mask.clone();
    }
    if let Some(mask) = &pinned.f {
        sel.theta_f = mask.clone();
    }

    let n_data = measurements.len();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&net, &sel);
    let mut log = Vec::with_capacity(cfg.n_iter);
    let mut cursor = 0usize;

    for i in 1..=cfg.n_iter {
        let gamma = temperature(i, cfg)?;

        // Pick the batch: all data when it fits, else the next window.
        let batch_idx: Vec<usize> = if cfg.batch_size >= n_data {
            (0..n_data).collect()
        } else {
            (0..cfg.batch_size)
                .map(|o| (cursor + o) % n_data)
                .collect()
        };
        cursor = (cursor + cfg.batch_size) % n_data;

        let y_cols: Vec<Array1<Complex64>> =
            batch_idx.iter().map(|&b| measurements[b].clone()).collect();
        let x_cols: Vec<Array1<Complex64>> =
            batch_idx.iter().map(|&b| images[b].clone()).collect();
        let y_batch = CMat::from_columns(&y_cols);
        let target = CMat::from_columns(&x_cols);

        // One fresh draw per axis per iteration; a pinned axis uses its
        // fixed mask as both hard and soft value.
        let draw = SelectionDraw {
            t: match &pinned.t {
                Some(mask) => pinned_sample(mask),
                None => sample_selection(&sel.theta_t, sel.m_t, gamma, &mut noise_rng)?,
            },
            r: match &pinned.r {
                Some(mask) => pinned_sample(mask),
                None => sample_selection(&sel.theta_r, sel.m_r, gamma, &mut noise_rng)?,
            },
            f: match &pinned.f {
                Some(mask) => pinned_sample(mask),
                None => sample_selection(&sel.theta_f, sel.m_f, gamma, &mut noise_rng)?,
            },
            gamma,
        };

        let mask = kron_mask(&draw.t.hard, &draw.r.hard, &draw.f.hard);
        let mut y_s = y_batch.clone();
        for (k, &m) in mask.iter().enumerate() {
            if m == 0.0 {
                for b in 0..y_s.ncols() {
                    y_s.re[[k, b]] = 0.0;
                    y_s.im[[k, b]] = 0.0;
                }
            }
        }

        let (output, tape) = clfista_forward_batch(&net, &y_s)?;
        let loss = l1_loss_planes(&target, &output) / y_batch.ncols() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: i,
                gamma,
                last_loss: log.last().map(|r: &TrainRecord| r.loss).unwrap_or(f64::NAN),
            });
        }

        let grads = backward(&net, &sel, &draw, &y_batch, &y_s, &tape, &target, &output)?;
        adam_step(&mut net, &mut sel, &grads, &mut state, cfg, mode.frozen_axes());

        let hard_indices = |s: &SelectionSample| -> Vec<usize> {
            s.hard
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(k, _)| k)
                .collect()
        };
        log.push(TrainRecord {
            iteration: i,
            gamma,
            loss,
            entropy_t: logits_entropy(&sel.theta_t),
            entropy_r: logits_entropy(&sel.theta_r),
            entropy_f: logits_entropy(&sel.theta_f),
            hard_t: hard_indices(&draw.t),
            hard_r: hard_indices(&draw.r),
            hard_f: hard_indices(&draw.f),
        });
    }

    Ok(TrainOutcome {
        selection: sel,
        net,
        log,
    })
}

/// Magic of the trained-artifact container.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to evaluate a trained run: the unrolled network, the
/// selection logits and counts, the hash of the measurement model the run
/// was trained against, and the threshold scale the layer thresholds were
/// seeded from.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: UnrolledNet,
    pub selection: SelectionState,
    pub model_hash: [u8; 32],
    pub delta_scale: f64,
}

impl Checkpoint {
    /// Canonical little-endian serialization; `save` writes exactly these
    /// bytes, so the content hash equals the file hash.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut w = crate::container::ContainerWriter::new(
                &mut buf,
                CHECKPOINT_MAGIC,
                CHECKPOINT_VERSION,
            )?;
            w.put_bytes(&self.model_hash)?;
            w.put_u64(self.selection.m_t as u64)?;
            w.put_u64(self.selection.m_r as u64)?;
            w.put_u64(self.selection.m_f as u64)?;
            w.put_f64_vec(&self.selection.theta_t)?;
            w.put_f64_vec(&self.selection.theta_r)?;
            w.put_f64_vec(&self.selection.theta_f)?;
            w.put_f64_mat(&self.net.w.re)?;
            w.put_f64_mat(&self.net.w.im)?;
            w.put_f64_mat(&self.net.v.re)?;
            w.put_f64_mat(&self.net.v.im)?;
            w.put_f64_vec(&self.net.delta)?;
            w.put_f64(self.delta_scale)?;
            w.finish()?;
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = crate::container::ContainerReader::new(
            std::io::Cursor::new(bytes),
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
        )?;
        let mut model_hash = [0u8; 32];
        model_hash.copy_from_slice(&r.get_bytes(32)?);
        let m_t = r.get_len()?;
        let m_r = r.get_len()?;
        let m_f = r.get_len()?;
        let theta_t = r.get_f64_vec()?;
        let theta_r = r.get_f64_vec()?;
        let theta_f = r.get_f64_vec()?;
        let w_re = r.get_f64_mat()?;
        let w_im = r.get_f64_mat()?;
        let v_re = r.get_f64_mat()?;
        let v_im = r.get_f64_mat()?;
        let delta = r.get_f64_vec()?;
        let delta_scale = r.get_f64()?;
        r.expect_eof()?;
        let selection = SelectionState {
            theta_t,
            theta_r,
            theta_f,
            m_t,
            m_r,
            m_f,
        };
        selection.validate()?;
        let net = UnrolledNet {
            w: CMat::from_planes(w_re, w_im),
            v: CMat::from_planes(v_re, v_im),
            delta,
        };
        net.validate()?;
        Ok(Self {
            net,
            selection,
            model_hash,
            delta_scale,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hash of the canonical byte encoding.
    pub fn content_hash(&self) -> Result<[u8; 32]> {
        Ok(crate::container::sha256_bytes(&self.to_bytes()?))
    }
}
