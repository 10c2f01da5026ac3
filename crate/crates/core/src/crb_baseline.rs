//! Estimator-agnostic selection baseline.
//!
//! Frequencies are fixed by a band rule around the pulse center; the
//! transmitter and receiver subsets are then found by exhaustive search,
//! minimizing the worst-case Cramér-Rao bound on a single scatterer's
//! complex amplitude over a set of candidate pixels. For the linear model
//! with circular Gaussian noise that bound is `σ²/‖s̃ ⊙ a_k‖²`, where
//! `a_k` is the candidate's column of the measurement matrix and `s̃` the
//! combined binary mask, so the search reduces to comparing masked column
//! energies.

use itertools::Itertools;
use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_model::{FrequencyGrid, MeasurementModel};
use crate::subsampling::SelectionPattern;

/// Frequency band the fixed rule prefers to stay inside, in Hz.
pub const BAND_LOW_HZ: f64 = 1.0e6;
pub const BAND_HIGH_HZ: f64 = 8.0e6;

/// Default ceiling on enumerated transmitter/receiver subset pairs.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// A fixed frequency selection plus a flag recording whether the band
/// constraint could be honored.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSelection {
    /// Binary mask over frequency bins.
    pub mask: Array1<f64>,
    /// True when all selected bins lie inside the preferred band; false
    /// when the rule had to fall back to unconstrained nearest-to-center.
    pub band_constrained: bool,
}

/// Picks the `m_f` bins nearest `f_c`, ties toward the lower frequency,
/// restricted to [`BAND_LOW_HZ`, `BAND_HIGH_HZ`] while that band holds at
/// least `m_f` bins; otherwise falls back to the unconstrained
/// nearest-to-`f_c` rule and clears `band_constrained`.
pub fn band_select_f(fgrid: &FrequencyGrid, m_f: usize, f_c: f64) -> Result<BandSelection> {
    let n_f = fgrid.n_f();
    if m_f == 0 || m_f > n_f {
        return Err(Error::InvalidParameter(format!(
            "frequency count {m_f} outside 1..={n_f}"
        )));
    }
    let in_band: Vec<usize> = (0..n_f)
        .filter(|&k| fgrid.freqs[k] >= BAND_LOW_HZ && fgrid.freqs[k] <= BAND_HIGH_HZ)
        .collect();
    let (pool, band_constrained) = if in_band.len() >= m_f {
        (in_band, true)
    } else {
        ((0..n_f).collect(), false)
    };
    let mut order = pool;
    order.sort_by(|&a, &b| {
        let da = (fgrid.freqs[a] - f_c).abs();
        let db = (fgrid.freqs[b] - f_c).abs();
        da.partial_cmp(&db)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mask = Array1::zeros(n_f);
    for &k in order.iter().take(m_f) {
        mask[k] = 1.0;
    }
    Ok(BandSelection {
        mask,
        band_constrained,
    })
}

fn check_binary_mask(mask: &Array1<f64>, len: usize, axis: &str) -> Result<()> {
    if mask.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{axis} mask length {} vs axis size {len}",
            mask.len()
        )));
    }
    if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{axis} mask must be binary"
        )));
    }
    Ok(())
}

/// Cramér-Rao bound on the complex amplitude of a lone scatterer at
/// `candidate`, under the given axis masks: `σ²/‖s̃ ⊙ a_candidate‖²`,
/// `+∞` when the masked column vanishes.
pub fn crb_for_selection(
    model: &MeasurementModel,
    s_t: &Array1<f64>,
    s_r: &Array1<f64>,
    s_f: &Array1<f64>,
    candidate: usize,
    noise_sigma: f64,
) -> Result<f64> {
    check_binary_mask(s_t, model.n_t(), "transmitter")?;
    check_binary_mask(s_r, model.n_r(), "receiver")?;
    check_binary_mask(s_f, model.n_f(), "frequency")?;
    if candidate >= model.n_pixels() {
        return Err(Error::InvalidParameter(format!(
            "candidate pixel {candidate} outside 0..{}",
            model.n_pixels()
        )));
    }
    if noise_sigma < 0.0 {
        return Err(Error::InvalidParameter("negative noise level".into()));
    }
    let mut energy = 0.0;
    for i in 0..model.n_t() {
        if s_t[i] == 0.0 {
            continue;
        }
        for j in 0..model.n_r() {
            if s_r[j] == 0.0 {
                continue;
            }
            for f in 0..model.n_f() {
                if s_f[f] == 0.0 {
                    continue;
                }
                energy += model.a[[model.row_index(i, j, f), candidate]].norm_sqr();
            }
        }
    }
    if energy == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(noise_sigma * noise_sigma / energy)
}

/// Search problem for the transmitter/receiver subsets.
#[derive(Debug, Clone)]
pub struct CrbSearchSpec {
    pub m_t: usize,
    pub m_r: usize,
    /// Pixels the worst case is taken over (the protected region).
    pub candidate_pixels: Vec<usize>,
    pub noise_sigma: f64,
    /// Fixed binary frequency mask applied to every evaluation.
    pub fixed_f_mask: Array1<f64>,
    /// Refuse enumerations larger than this many subset pairs.
    pub enumeration_cap: u64,
}

impl CrbSearchSpec {
    pub fn new(
        m_t: usize,
        m_r: usize,
        candidate_pixels: Vec<usize>,
        noise_sigma: f64,
        fixed_f_mask: Array1<f64>,
    ) -> Self {
        Self {
            m_t,
            m_r,
            candidate_pixels,
            noise_sigma,
            fixed_f_mask,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    fn validate(&self, model: &MeasurementModel) -> Result<()> {
        if self.m_t == 0 || self.m_t > model.n_t() || self.m_r == 0 || self.m_r > model.n_r() {
            return Err(Error::InvalidParameter(format!(
                "subset sizes ({}, {}) outside axes ({}, {})",
                self.m_t,
                self.m_r,
                model.n_t(),
                model.n_r()
            )));
        }
        if self.candidate_pixels.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one candidate pixel".into(),
            ));
        }
        if let Some(&bad) = self
            .candidate_pixels
            .iter()
            .find(|&&k| k >= model.n_pixels())
        {
            return Err(Error::InvalidParameter(format!(
                "candidate pixel {bad} outside 0..{}",
                model.n_pixels()
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter("negative noise level".into()));
        }
        check_binary_mask(&self.fixed_f_mask, model.n_f(), "frequency")?;
        if self.fixed_f_mask.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParameter("empty frequency mask".into()));
        }
        Ok(())
    }
}

/// Outcome of the exhaustive search.
#[derive(Debug, Clone)]
pub struct CrbSearchResult {
    pub s_t: Array1<f64>,
    pub s_r: Array1<f64>,
    /// The achieved worst-case bound over the candidate pixels.
    pub minmax_value: f64,
    pub pairs_evaluated: u64,
}

impl CrbSearchResult {
    /// Packages the found subsets with a fixed frequency mask as a
    /// selection pattern for the evaluation harness.
    pub fn to_pattern(&self, f_mask: &Array1<f64>) -> Result<SelectionPattern> {
        let indices = |m: &Array1<f64>| -> Vec<usize> {
            m.iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(k, _)| k)
                .collect()
        };
        SelectionPattern::from_indices(
            (self.s_t.len(), self.s_r.len(), f_mask.len()),
            indices(&self.s_t),
            indices(&self.s_r),
            indices(f_mask),
        )
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u64 = 1;
    for i in 0..k {
        out = out.saturating_mul((n - i) as u64) / (i + 1) as u64;
    }
    out
}

/// Relative width of the value band treated as a tie by the search.
///
/// Mathematically equal subset pairs are common here — the matrix entry
/// moduli do not depend on the propagation delays, so two pairs with the
/// same counts carry identical masked energy — yet their bounds are summed
/// in different orders and come out a few ulps apart. Comparing through
/// this band keeps the lexicographic tie-break in charge of such ties
/// instead of rounding noise. Genuinely distinct values in these models
/// differ by far more than the band, so the argmin is unaffected.
pub const TIE_REL_TOL: f64 = 1e-12;

/// True when `value` beats `incumbent` by more than the tie band.
#[inline]
fn improves(value: f64, incumbent: f64) -> bool {
    value < incumbent * (1.0 - TIE_REL_TOL)
}

/// Enumerates every size-`m_t` transmitter subset × size-`m_r` receiver
/// subset in lexicographic order and returns the pair minimizing the
/// worst-case bound over the candidate pixels; values within
/// [`TIE_REL_TOL`] of each other count as tied and keep the
/// lexicographically first pair. Refuses enumerations past the cap.
pub fn exhaustive_minmax_search(
    model: &MeasurementModel,
    spec: &CrbSearchSpec,
) -> Result<CrbSearchResult> {
    spec.validate(model)?;
    let n_t = model.n_t();
    let n_r = model.n_r();
    let total = binomial(n_t, spec.m_t).saturating_mul(binomial(n_r, spec.m_r));
    if total > spec.enumeration_cap {
        return Err(Error::ResourceLimit(format!(
            "{total} subset pairs exceed the enumeration cap {}; reduce the axes or subset sizes",
            spec.enumeration_cap
        )));
    }

    // Per-candidate energy of each (transmitter, receiver) cell under the
    // fixed frequency mask; every subset pair evaluation is then a sum of
    // these cells.
    let n_cand = spec.candidate_pixels.len();
    let mut cell = vec![0.0_f64; n_cand * n_t * n_r];
    for (c, &pixel) in spec.candidate_pixels.iter().enumerate() {
        for i in 0..n_t {
            for j in 0..n_r {
                let mut e = 0.0;
                for f in 0..model.n_f() {
                    if spec.fixed_f_mask[f] == 1.0 {
                        e += model.a[[model.row_index(i, j, f), pixel]].norm_sqr();
                    }
                }
                cell[(c * n_t + i) * n_r + j] = e;
            }
        }
    }

    let t_subsets: Vec<Vec<usize>> = (0..n_t).combinations(spec.m_t).collect();
    let r_subsets: Vec<Vec<usize>> = (0..n_r).combinations(spec.m_r).collect();
    let sigma_sq = spec.noise_sigma * spec.noise_sigma;

    // Best (value, flat enumeration index); the index makes tie-breaking
    // independent of the parallel schedule.
    let best = t_subsets
        .par_iter()
        .enumerate()
        .map(|(ti, t_set)| {
            // Energy of the chosen transmitters per (candidate, receiver).
            let mut row_energy = vec![0.0_f64; n_cand * n_r];
            for c in 0..n_cand {
                for &i in t_set {
                    for j in 0..n_r {
                        row_energy[c * n_r + j] += cell[(c * n_t + i) * n_r + j];
                    }
                }
            }
            let mut local_best = (f64::INFINITY, u64::MAX);
            for (ri, r_set) in r_subsets.iter().enumerate() {
                let mut worst = 0.0_f64;
                for c in 0..n_cand {
                    let mut e = 0.0;
                    for &j in r_set {
                        e += row_energy[c * n_r + j];
                    }
                    let value = if e == 0.0 {
                        f64::INFINITY
                    } else {
                        sigma_sq / e
                    };
                    if value > worst {
                        worst = value;
                    }
                }
                let idx = ti as u64 * r_subsets.len() as u64 + ri as u64;
                if improves(worst, local_best.0)
                    || (!improves(local_best.0, worst) && idx < local_best.1)
                {
                    local_best = (worst, idx);
                }
            }
            local_best
        })
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| {
                if improves(b.0, a.0) || (!improves(a.0, b.0) && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );

    let (minmax_value, idx) = best;
    let ti = (idx / r_subsets.len() as u64) as usize;
    let ri = (idx % r_subsets.len() as u64) as usize;
    let mut s_t = Array1::zeros(n_t);
    for &i in &t_subsets[ti] {
        s_t[i] = 1.0;
    }
    let mut s_r = Array1::zeros(n_r);
    for &j in &r_subsets[ri] {
        s_r[j] = 1.0;
    }
    Ok(CrbSearchResult {
        s_t,
        s_r,
        minmax_value,
        pairs_evaluated: total,
    })
}
