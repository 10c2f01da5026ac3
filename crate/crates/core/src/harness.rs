//! Experiment orchestration and evaluation.
//!
//! Runs a selection pattern against a test dataset — learned patterns
//! through their trained unrolled network, baseline patterns through a
//! plain iterative solve with a matched iteration budget — and reports
//! per-scene mean squared error, its empirical CDF, CSV/plot renderings,
//! and a dominance summary. Evaluations work on the gathered active rows
//! of the measurement matrix, which is algebraically identical to masking
//! and keeps the per-scene cost proportional to the kept sample count.

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward_model::MeasurementModel;
use crate::linalg::CMat;
use crate::operator::{largest_eigenvalue_ata, PowerIterationOptions};
use crate::recovery::{
    clfista_infer_batch, fista_solve_batch, gather_active_rows, gather_entries, FistaConfig,
    UnrolledNet,
};
use crate::scene_gen::Dataset;
use crate::subsampling::SelectionPattern;
use crate::training::Checkpoint;

/// Mean squared error per pixel of a complex image estimate.
pub fn mse(x: &Array1<Complex64>, x_hat: &Array1<Complex64>) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "mse inputs of lengths {} and {}",
            x.len(),
            x_hat.len()
        )));
    }
    Ok(x.iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / x.len() as f64)
}

/// Empirical CDF as sorted (value, fraction) steps: the k-th sorted value
/// maps to k/N, and repeated values keep only their final (largest)
/// fraction.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (k, &v) in sorted.iter().enumerate() {
        let fraction = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = fraction,
            _ => out.push((v, fraction)),
        }
    }
    Ok(out)
}

/// Median of a sample (mean of the central pair for even sizes).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// The compared subsampling methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jdps,
    Crb,
    DpsT,
    DpsF,
    Random,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Jdps => "J-DPS",
            Method::Crb => "CRB",
            Method::DpsT => "DPS-T",
            Method::DpsF => "DPS-F",
            Method::Random => "RANDOM",
        }
    }
}

/// Which reconstructor a method is paired with: learned patterns use
/// their trained network, baselines use the plain solver with a matched
/// iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstructor {
    Clfista,
    Fista,
}

/// One row of the benchmark: a method, its per-axis keep counts, and its
/// reconstructor pairing.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentSpec {
    pub method: Method,
    pub m_t: usize,
    pub m_r: usize,
    pub m_f: usize,
    pub reconstructor: Reconstructor,
}

impl ExperimentSpec {
    /// Kept-over-total sample counts as an exact rational.
    pub fn compression_rational(&self, n_t: usize, n_r: usize, n_f: usize) -> (u64, u64) {
        (
            (self.m_t * self.m_r * self.m_f) as u64,
            (n_t * n_r * n_f) as u64,
        )
    }

    /// The rational rendered as a percentage with one decimal.
    pub fn compression_display(&self, n_t: usize, n_r: usize, n_f: usize) -> String {
        let (num, den) = self.compression_rational(n_t, n_r, n_f);
        format!("{:.1}%", 100.0 * num as f64 / den as f64)
    }
}

/// The four benchmark setups at their standard keep counts.
pub fn reference_setups() -> Vec<ExperimentSpec> {
    vec![
        ExperimentSpec {
            method: Method::Jdps,
            m_t: 3,
            m_r: 4,
            m_f: 9,
            reconstructor: Reconstructor::Clfista,
        },
        ExperimentSpec {
            method: Method::Crb,
            m_t: 3,
            m_r: 4,
            m_f: 9,
            reconstructor: Reconstructor::Fista,
        },
        ExperimentSpec {
            method: Method::DpsT,
            m_t: 3,
            m_r: 8,
            m_f: 23,
            reconstructor: Reconstructor::Clfista,
        },
        ExperimentSpec {
            method: Method::DpsF,
            m_t: 8,
            m_r: 8,
            m_f: 9,
            reconstructor: Reconstructor::Clfista,
        },
    ]
}

/// Uniformly random selection pattern with the given per-axis counts.
pub fn random_pattern(
    (n_t, n_r, n_f): (usize, usize, usize),
    (m_t, m_r, m_f): (usize, usize, usize),
    seed: u64,
) -> Result<SelectionPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |n: usize, m: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for a in (1..n).rev() {
            idx.swap(a, rng.gen_range(0..=a));
        }
        idx.truncate(m);
        idx.sort_unstable();
        idx
    };
    SelectionPattern::from_indices((n_t, n_r, n_f), pick(n_t, m_t), pick(n_r, m_r), pick(n_f, m_f))
}

/// Evaluation knobs shared by both reconstructors.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Plain-solver budget as a multiple of the unrolled depth.
    pub fista_iter_factor: usize,
    /// Unrolled depth the budget is matched against.
    pub n_layer: usize,
    /// ℓ₁ weight as a fraction of the calibrated back-projection peak.
    pub lambda_scale: f64,
    /// How many leading scenes calibrate the ℓ₁ weight.
    pub calibration_scenes: usize,
    /// Scenes per evaluation batch (bounds working memory).
    pub chunk_scenes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            fista_iter_factor: 10,
            n_layer: 15,
            lambda_scale: 0.01,
            calibration_scenes: 32,
            chunk_scenes: 64,
        }
    }
}

/// Evaluation of one pattern on one test set.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub label: String,
    pub pattern: SelectionPattern,
    pub per_scene_mse: Vec<f64>,
    pub cdf: Vec<(f64, f64)>,
    pub wall_seconds: f64,
}

impl EvalResult {
    pub fn median_mse(&self) -> Result<f64> {
        median(&self.per_scene_mse)
    }
}

fn check_dataset(model: &MeasurementModel, dataset: &Dataset) -> Result<()> {
    let model_hash = model.content_hash()?;
    if dataset.model_hash != model_hash {
        return Err(Error::HashMismatch(
            "dataset was generated against a different measurement model".into(),
        ));
    }
    if dataset.measurements.is_none() {
        return Err(Error::InvalidParameter(
            "dataset holds no measurements; regenerate with acquisition enabled".into(),
        ));
    }
    Ok(())
}

fn ground_truth_images(model: &MeasurementModel, dataset: &Dataset) -> Vec<Array1<Complex64>> {
    dataset
        .scenes
        .iter()
        .map(|s| s.image(model.n_pixels()))
        .collect()
}

/// Runs the plain solver on the pattern's gathered submatrix. The ℓ₁
/// weight is `lambda_scale` times the largest back-projected magnitude
/// over the leading calibration scenes, and the step is the inverse of
/// the submatrix's largest Gram eigenvalue.
pub fn eval_fista(
    model: &MeasurementModel,
    dataset: &Dataset,
    pattern: &SelectionPattern,
    label: &str,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    let start = std::time::Instant::now();
    check_dataset(model, dataset)?;
    pattern.validate()?;
    if pattern.n_t != model.n_t() || pattern.n_r != model.n_r() || pattern.n_f != model.n_f() {
        return Err(Error::DimensionMismatch(
            "pattern axes do not match the model".into(),
        ));
    }
    let measurements = dataset.measurements.as_ref().unwrap();
    let images = ground_truth_images(model, dataset);

    let (a_sub, active) = gather_active_rows(&model.a, &pattern.row_mask());
    let lmax = largest_eigenvalue_ata(&a_sub.to_complex(), PowerIterationOptions::default())?;
    let step = 1.0 / (lmax * (1.0 + 1e-9));

    let n_cal = opts.calibration_scenes.max(1).min(measurements.len());
    let cal_cols: Vec<Array1<Complex64>> = measurements[..n_cal]
        .iter()
        .map(|y| gather_entries(y, &active))
        .collect();
    let back = a_sub.adjoint_mul(&CMat::from_columns(&cal_cols));
    let peak = back
        .re
        .iter()
        .zip(back.im.iter())
        .map(|(&r, &i)| f64::hypot(r, i))
        .fold(0.0, f64::max);
    let lambda = opts.lambda_scale * peak;

    let mut cfg = FistaConfig::new(opts.fista_iter_factor * opts.n_layer, step, lambda);
    cfg.tolerance = 0.0; // fixed budget: keeps batches column-independent

    let mut per_scene_mse = Vec::with_capacity(measurements.len());
    let chunk = opts.chunk_scenes.max(1);
    for (chunk_idx, block) in measurements.chunks(chunk).enumerate() {
        let cols: Vec<Array1<Complex64>> =
            block.iter().map(|y| gather_entries(y, &active)).collect();
        let x_hat = fista_solve_batch(&a_sub, &CMat::from_columns(&cols), &cfg)?;
        for (b, _) in block.iter().enumerate() {
            let scene_idx = chunk_idx * chunk + b;
            per_scene_mse.push(mse(&images[scene_idx], &x_hat.column_to_complex(b))?);
        }
    }

    let cdf = empirical_cdf(&per_scene_mse)?;
    Ok(EvalResult {
        label: label.to_string(),
        pattern: pattern.clone(),
        per_scene_mse,
        cdf,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs a trained unrolled network on its checkpoint's inferred pattern.
/// Only the active measurement rows participate: the network's input map
/// is reduced to those columns, which reproduces masking exactly.
pub fn eval_clfista(
    model: &MeasurementModel,
    dataset: &Dataset,
    checkpoint: &Checkpoint,
    label: &str,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    let start = std::time::Instant::now();
    check_dataset(model, dataset)?;
    if checkpoint.model_hash != model.content_hash()? {
        return Err(Error::HashMismatch(
            "checkpoint was trained against a different measurement model".into(),
        ));
    }
    let pattern = SelectionPattern::from_state(&checkpoint.selection)?;
    if pattern.n_t != model.n_t() || pattern.n_r != model.n_r() || pattern.n_f != model.n_f() {
        return Err(Error::DimensionMismatch(
            "checkpoint axes do not match the model".into(),
        ));
    }
    let measurements = dataset.measurements.as_ref().unwrap();
    let images = ground_truth_images(model, dataset);

    let mask = pattern.row_mask();
    let active: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0.0)
        .map(|(i, _)| i)
        .collect();
    let reduced = UnrolledNet {
        w: checkpoint.net.w.clone(),
        v: checkpoint.net.v.select_columns(&active),
        delta: checkpoint.net.delta.clone(),
    };

    let mut per_scene_mse = Vec::with_capacity(measurements.len());
    let chunk = opts.chunk_scenes.max(1);
    for (chunk_idx, block) in measurements.chunks(chunk).enumerate() {
        let cols: Vec<Array1<Complex64>> =
            block.iter().map(|y| gather_entries(y, &active)).collect();
        let x_hat = clfista_infer_batch(&reduced, &CMat::from_columns(&cols))?;
        for (b, _) in block.iter().enumerate() {
            let scene_idx = chunk_idx * chunk + b;
            per_scene_mse.push(mse(&images[scene_idx], &x_hat.column_to_complex(b))?);
        }
    }

    let cdf = empirical_cdf(&per_scene_mse)?;
    Ok(EvalResult {
        label: label.to_string(),
        pattern,
        per_scene_mse,
        cdf,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// How a pattern is turned into images for scoring.
pub enum Reconstruction<'a> {
    /// A trained checkpoint: its own inferred pattern and network.
    Learned(&'a Checkpoint),
    /// A fixed pattern through the plain solver.
    Plain(&'a SelectionPattern),
}

/// Evaluates one experiment: subsample per the pattern, reconstruct,
/// score per-scene MSE, and build the CDF.
pub fn run_experiment(
    model: &MeasurementModel,
    dataset: &Dataset,
    label: &str,
    reconstruction: Reconstruction<'_>,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    match reconstruction {
        Reconstruction::Learned(ckpt) => eval_clfista(model, dataset, ckpt, label, opts),
        Reconstruction::Plain(pattern) => eval_fista(model, dataset, pattern, label, opts),
    }
}

/// CDF curves of all results as a headered CSV; scientific notation keeps
/// the encoding locale-free and byte-stable.
pub fn cdf_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("method,mse,fraction\n");
    for r in results {
        for &(v, f) in &r.cdf {
            out.push_str(&format!("{},{:e},{:e}\n", r.label, v, f));
        }
    }
    out
}

/// Fraction of samples at or below `v` in a sorted sample.
fn cdf_at(sorted: &[f64], v: f64) -> f64 {
    sorted.partition_point(|&s| s <= v) as f64 / sorted.len() as f64
}

/// Pairwise dominance summary. One curve dominates another when its CDF
/// is at least the other's everywhere (its errors are stochastically
/// smaller); otherwise the curves cross and the report says so.
pub fn dominance_report(results: &[EvalResult]) -> String {
    let sorted: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            let mut v = r.per_scene_mse.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            v
        })
        .collect();
    let mut grid: Vec<f64> = sorted.iter().flatten().cloned().collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    grid.dedup();

    let mut out = String::new();
    for i in 0..results.len() {
        for j in (i + 1)..results.len() {
            let (mut i_ge, mut j_ge) = (true, true);
            for &v in &grid {
                let fi = cdf_at(&sorted[i], v);
                let fj = cdf_at(&sorted[j], v);
                if fi < fj {
                    i_ge = false;
                }
                if fj < fi {
                    j_ge = false;
                }
            }
            let line = match (i_ge, j_ge) {
                (true, true) => format!(
                    "{} vs {}: identical error distributions",
                    results[i].label, results[j].label
                ),
                (true, false) => format!(
                    "{} vs {}: {} dominates",
                    results[i].label, results[j].label, results[i].label
                ),
                (false, true) => format!(
                    "{} vs {}: {} dominates",
                    results[i].label, results[j].label, results[j].label
                ),
                (false, false) => format!(
                    "{} vs {}: curves cross",
                    results[i].label, results[j].label
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders the CDF curves as a static vector plot (one step curve per
/// result, log-scaled error axis when all values are positive).
pub fn cdf_svg(results: &[EvalResult]) -> String {
    let (width, height) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let values: Vec<f64> = results
        .iter()
        .flat_map(|r| r.cdf.iter().map(|&(v, _)| v))
        .collect();
    let log_scale = values.iter().all(|&v| v > 0.0);
    let tx = |v: f64| if log_scale { v.log10() } else { v };
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(tx(v)), hi.max(tx(v)))
        });
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let x_of = |v: f64| ml + (tx(v) - lo) / (hi - lo) * pw;
    let y_of = |f: f64| mt + (1.0 - f) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));

    // Axis ticks: five across, five up.
    for k in 0..=4 {
        let t = lo + (hi - lo) * k as f64 / 4.0;
        let x = ml + pw * k as f64 / 4.0;
        let label = if log_scale {
            format!("{:.2e}", 10f64.powf(t))
        } else {
            format!("{t:.3}")
        };
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>\n",
            mt + ph,
            mt + ph + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>\n",
            mt + ph + 20.0
        ));
        let f = k as f64 / 4.0;
        let y = y_of(f);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{ml}\" y2=\"{y:.2}\" stroke=\"#333\"/>\n",
            ml - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{f:.2}</text>\n",
            ml - 9.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">mean squared error</text>\n",
        ml + pw / 2.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">fraction of scenes</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    for (idx, r) in results.iter().enumerate() {
        let color = SVG_PALETTE[idx % SVG_PALETTE.len()];
        let mut d = String::new();
        let mut prev_f = 0.0;
        for (k, &(v, f)) in r.cdf.iter().enumerate() {
            let x = x_of(v);
            if k == 0 {
                d.push_str(&format!("M {x:.2} {:.2} ", y_of(prev_f)));
            } else {
                d.push_str(&format!("L {x:.2} {:.2} ", y_of(prev_f)));
            }
            d.push_str(&format!("L {x:.2} {:.2} ", y_of(f)));
            prev_f = f;
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            d.trim_end()
        ));
        let ly = mt + 16.0 + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ml + pw - 150.0,
            ml + pw - 120.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            ml + pw - 114.0,
            ly + 4.0,
            r.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::tiny_model;
    use crate::recovery::{fista_solve, MaskedOperator};
    use crate::scene_gen::{generate_dataset, SceneDistribution};
    use crate::subsampling::{apply_mask, SelectionState};

    fn tiny_distribution() -> SceneDistribution {
        let mut dist = SceneDistribution::default();
        dist.x_min = 0.0;
        dist.x_max = 0.6e-3;
        dist.z_min = 0.0;
        dist.z_max = 0.6e-3;
        dist.k_support = vec![1, 2];
        dist
    }

    fn tiny_eval_options() -> EvalOptions {
        EvalOptions {
            fista_iter_factor: 10,
            n_layer: 3,
            lambda_scale: 0.01,
            calibration_scenes: 4,
            chunk_scenes: 4,
        }
    }

    #[test]
    fn mse_examples() {
        let x = Array1::from_vec(vec![Complex64::new(1.0, 2.0); 4]);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        let zero = Array1::from_elem(4, Complex64::new(0.0, 0.0));
        let ones = Array1::from_elem(4, Complex64::new(1.0, 0.0));
        assert_eq!(mse(&zero, &ones).unwrap(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Array1::from_shape_fn(30, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let b = Array1::from_shape_fn(30, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let want: f64 = (0..30).map(|i| (a[i] - b[i]).norm_sqr()).sum::<f64>() / 30.0;
        assert!((mse(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!(mse(&a, &zero).is_err());
    }

    #[test]
    fn cdf_of_a_small_sample() {
        let cdf = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
        let want = vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)];
        assert_eq!(cdf.len(), 3);
        for ((gv, gf), (wv, wf)) in cdf.iter().zip(want.iter()) {
            assert_eq!(gv, wv);
            assert!((gf - wf).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_collapses_repeated_values_to_one_step() {
        let cdf = empirical_cdf(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(cdf, vec![(5.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn cdf_of_uniform_samples_tracks_the_identity() {
        // Dvoretzky–Kiefer–Wolfowitz: with n = 10⁴ samples the largest
        // deviation from the true CDF exceeds 0.0136 with probability
        // under 1%; 0.02 leaves comfortable slack.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let cdf = empirical_cdf(&samples).unwrap();
        let mut worst = 0.0_f64;
        for &(v, f) in &cdf {
            worst = worst.max((f - v).abs());
        }
        assert!(worst < 0.02, "max deviation {worst}");
    }

    #[test]
    fn cdf_is_a_nondecreasing_step_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..257).map(|_| rng.gen::<f64>() * 10.0).collect();
        let cdf = empirical_cdf(&samples).unwrap();
        for w in cdf.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].1 > w[0].1);
        }
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn median_of_odd_and_even_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn reference_setups_have_the_expected_compression() {
        let setups = reference_setups();
        let rationals: Vec<(u64, u64)> = setups
            .iter()
            .map(|s| s.compression_rational(8, 8, 65))
            .collect();
        assert_eq!(
            rationals,
            vec![(108, 4160), (108, 4160), (552, 4160), (576, 4160)]
        );
        let displays: Vec<String> = setups
            .iter()
            .map(|s| s.compression_display(8, 8, 65))
            .collect();
        assert_eq!(displays, vec!["2.6%", "2.6%", "13.3%", "13.8%"]);
        assert_eq!(setups[0].reconstructor, Reconstructor::Clfista);
        assert_eq!(setups[1].reconstructor, Reconstructor::Fista);
    }

    #[test]
    fn random_patterns_are_seeded_and_distinct() {
        let a = random_pattern((8, 8, 65), (3, 4, 9), 7).unwrap();
        let b = random_pattern((8, 8, 65), (3, 4, 9), 7).unwrap();
        let c = random_pattern((8, 8, 65), (3, 4, 9), 8).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), c.to_text());
        assert_eq!(a.counts(), (3, 4, 9));
        assert_eq!(a.row_mask().iter().filter(|&&v| v == 1.0).count(), 108);
        c.validate().unwrap();
    }

    #[test]
    fn plain_eval_matches_per_scene_masked_solves() {
        let model = tiny_model(2, 8, 3, 3);
        let ds = generate_dataset(&model, &tiny_distribution(), 6, 1e-8, 11).unwrap();
        let pattern = random_pattern(
            (model.n_t(), model.n_r(), model.n_f()),
            (1, 2, 3),
            5,
        )
        .unwrap();
        let opts = tiny_eval_options();
        let result = eval_fista(&model, &ds, &pattern, "plain", &opts).unwrap();
        assert_eq!(result.per_scene_mse.len(), 6);

        // Oracle: per-scene masked-operator solve at the same step and
        // threshold (recomputed the same way).
        let mask = pattern.row_mask();
        let (a_sub, active) = gather_active_rows(&model.a, &mask);
        let lmax =
            largest_eigenvalue_ata(&a_sub.to_complex(), PowerIterationOptions::default()).unwrap();
        let step = 1.0 / (lmax * (1.0 + 1e-9));
        let measurements = ds.measurements.as_ref().unwrap();
        let peak = measurements[..4]
            .iter()
            .flat_map(|y| {
                let back = crate::linalg::cmatvec_adjoint(
                    &a_sub.to_complex(),
                    &gather_entries(y, &active),
                );
                back.to_vec()
            })
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let lambda = opts.lambda_scale * peak;
        let mut cfg = FistaConfig::new(opts.fista_iter_factor * opts.n_layer, step, lambda);
        cfg.tolerance = 0.0;
        let op = MaskedOperator::new(&model.a, &mask).unwrap();
        for (i, y) in measurements.iter().enumerate() {
            let y_masked = apply_mask(&mask, y).unwrap();
            let x_hat = fista_solve(&op, &y_masked, &cfg).unwrap();
            let want = mse(&ds.scenes[i].image(model.n_pixels()), &x_hat).unwrap();
            let got = result.per_scene_mse[i];
            assert!(
                (got - want).abs() <= 1e-8 * want.max(1e-30),
                "scene {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn learned_eval_matches_full_mask_forward_passes() {
        let model = tiny_model(2, 8, 3, 3);
        let ds = generate_dataset(&model, &tiny_distribution(), 5, 0.0, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sel = SelectionState::init(model.n_t(), model.n_r(), model.n_f(), 1, 2, 2, &mut rng)
            .unwrap();
        let mu = 0.5
            / largest_eigenvalue_ata(&model.a, PowerIterationOptions::default()).unwrap();
        let net = UnrolledNet::fista_init(&CMat::from_complex(&model.a), mu, 3, 1e-3).unwrap();
        let ckpt = Checkpoint {
            net: net.clone(),
            selection: sel,
            model_hash: model.content_hash().unwrap(),
            delta_scale: 1e-3,
        };
        let mut opts = tiny_eval_options();
        opts.chunk_scenes = 2; // force several chunks
        let result = eval_clfista(&model, &ds, &ckpt, "learned", &opts).unwrap();

        let pattern = SelectionPattern::from_state(&ckpt.selection).unwrap();
        let mask = pattern.row_mask();
        let measurements = ds.measurements.as_ref().unwrap();
        for (i, y) in measurements.iter().enumerate() {
            let y_s = apply_mask(&mask, y).unwrap();
            let (x_hat, _) = crate::recovery::clfista_forward(&net, &y_s).unwrap();
            let want = mse(&ds.scenes[i].image(model.n_pixels()), &x_hat).unwrap();
            let got = result.per_scene_mse[i];
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1e-30),
                "scene {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn hash_mismatches_are_rejected() {
        let model = tiny_model(2, 8, 3, 3);
        let other = tiny_model(2, 8, 3, 4);
        let ds = generate_dataset(&other, &tiny_distribution(), 2, 0.0, 1).unwrap();
        let pattern =
            random_pattern((model.n_t(), model.n_r(), model.n_f()), (1, 1, 2), 1).unwrap();
        let err = eval_fista(&model, &ds, &pattern, "x", &tiny_eval_options()).unwrap_err();
        assert!(matches!(err, Error::HashMismatch(_)));

        let ds_ok = generate_dataset(&model, &tiny_distribution(), 2, 0.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sel = SelectionState::init(model.n_t(), model.n_r(), model.n_f(), 1, 1, 2, &mut rng)
            .unwrap();
        let mu = 1e-3;
        let ckpt = Checkpoint {
            net: UnrolledNet::fista_init(&CMat::from_complex(&model.a), mu, 2, 0.0).unwrap(),
            selection: sel,
            model_hash: [0u8; 32],
            delta_scale: 0.0,
        };
        let err = eval_clfista(&model, &ds_ok, &ckpt, "x", &tiny_eval_options()).unwrap_err();
        assert!(matches!(err, Error::HashMismatch(_)));
    }

    fn synthetic_result(label: &str, mses: Vec<f64>) -> EvalResult {
        let cdf = empirical_cdf(&mses).unwrap();
        EvalResult {
            label: label.into(),
            pattern: SelectionPattern::from_indices((2, 2, 2), vec![0], vec![0], vec![0]).unwrap(),
            per_scene_mse: mses,
            cdf,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn csv_is_deterministic_and_headered() {
        let results = vec![
            synthetic_result("a", vec![0.25, 0.5]),
            synthetic_result("b", vec![0.125]),
        ];
        let csv = cdf_csv(&results);
        assert!(csv.starts_with("method,mse,fraction\n"));
        assert_eq!(csv, cdf_csv(&results));
        assert_eq!(csv.lines().count(), 1 + 2 + 1);
        assert!(csv.contains("a,2.5e-1,5e-1"));
        assert!(csv.contains("b,1.25e-1,1e0"));
    }

    #[test]
    fn dominance_report_distinguishes_order_and_crossing() {
        let low = synthetic_result("low", vec![0.1, 0.2, 0.3]);
        let high = synthetic_result("high", vec![0.4, 0.5, 0.6]);
        let cross = synthetic_result("cross", vec![0.05, 0.55, 0.65]);
        let report = dominance_report(&[low, high, cross]);
        assert!(report.contains("low vs high: low dominates"));
        assert!(report.contains("low vs cross: curves cross"));
        assert!(report.contains("high vs cross: curves cross"));
    }

    #[test]
    fn svg_renders_one_curve_per_result() {
        let results = vec![
            synthetic_result("a", vec![1e-3, 2e-3, 8e-3]),
            synthetic_result("b", vec![4e-3, 9e-3]),
        ];
        let svg = cdf_svg(&results);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains(">a</text>"));
        assert!(svg.contains(">b</text>"));
        assert_eq!(svg, cdf_svg(&results));
    }
}
