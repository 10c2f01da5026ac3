//! Command-line front end: builds acquisition models, generates seeded
//! datasets, trains subsampling patterns jointly with the unrolled
//! reconstructor, runs the bound-based baseline search, and evaluates or
//! compares patterns on shared test sets.
//!
//! Exit codes: 0 on success, 1 on runtime failures (missing files, hash
//! mismatches, solver errors), 2 on command-line usage errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jdps_core::config::Config;
use jdps_core::container::sha256_file;
use jdps_core::crb_baseline::{band_select_f, exhaustive_minmax_search, CrbSearchSpec};
use jdps_core::forward_model::{model_parts_from_config, MeasurementModel};
use jdps_core::harness::{
    cdf_csv, cdf_svg, dominance_report, random_pattern, reference_setups, run_experiment,
    EvalOptions, EvalResult, Method, Reconstruction, Reconstructor,
};
use jdps_core::linalg::CMat;
use jdps_core::operator::{largest_eigenvalue_ata, LinearOperator, PowerIterationOptions};
use jdps_core::recovery::{MaskedOperator, UnrolledNet};
use jdps_core::scene_gen::{generate_dataset, noise_sigma_for_snr, Dataset, SceneDistribution};
use jdps_core::subsampling::{SelectionPattern, SelectionState};
use jdps_core::training::{train, Checkpoint, PinnedAxes, TrainConfig, TrainMode};
use ndarray::Array1;
use num_complex::Complex64;

#[derive(Parser)]
#[command(
    name = "jdps",
    version,
    about = "Learned joint subsampling and reconstruction for full-matrix-capture imaging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acquisition-model containers.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Seeded synthetic datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Pattern training, joint or single-axis.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Baselines that need no training.
    #[command(subcommand)]
    Baseline(BaselineCmd),
    /// Pattern evaluation and method comparison.
    #[command(subcommand)]
    Eval(EvalCmd),
}

/// Configuration file plus inline overrides, shared by every subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// Key = value configuration file; `include <path>` pulls other files in.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inline override applied after the file, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => Config::new(),
        };
        for pair in &self.set {
            let Some((key, value)) = pair.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {pair:?}");
            };
            cfg.set(key.trim(), value.trim());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Assemble the measurement matrix and write the model container.
    Build {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Simulate scenes through a model and write the dataset container.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model container the scenes are simulated through.
        #[arg(long)]
        model: PathBuf,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        scenes: usize,
        /// Scene and noise seed.
        #[arg(long)]
        seed: u64,
        /// Target signal-to-noise ratio in dB; σ is calibrated from probe scenes.
        #[arg(long, conflicts_with = "noise_sigma")]
        snr_db: Option<f64>,
        /// Per-component noise level σ, bypassing SNR calibration.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Probe scenes used to calibrate σ from --snr-db.
        #[arg(long, default_value_t = 64)]
        snr_probe_scenes: usize,
    },
}

/// Knobs shared by all training subcommands; unset values fall back to
/// config keys of the same name, then to built-in defaults.
#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model container.
    #[arg(long)]
    model: PathBuf,
    /// Training dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Output checkpoint file.
    #[arg(long)]
    out: PathBuf,
    /// Training seed (initialization, draws, batches).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optimization iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Scenes per batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Unrolled depth of the reconstructor.
    #[arg(long)]
    layers: Option<usize>,
    /// Per-iteration log file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Learn transmitters, receivers, and frequencies jointly.
    Jdps {
        #[command(flatten)]
        args: TrainArgs,
        /// Kept transmitters.
        #[arg(long, default_value_t = 3)]
        m_t: usize,
        /// Kept receivers.
        #[arg(long, default_value_t = 4)]
        m_r: usize,
        /// Kept frequency bins.
        #[arg(long, default_value_t = 9)]
        m_f: usize,
    },
    /// Learn the transmitter axis; receivers stay full and frequencies
    /// pin to the band rule.
    DpsT {
        #[command(flatten)]
        args: TrainArgs,
        /// Kept transmitters.
        #[arg(long, default_value_t = 3)]
        m_t: usize,
        /// Band-rule frequency bins to pin.
        #[arg(long, default_value_t = 23)]
        m_f: usize,
    },
    /// Learn the frequency axis; transmitters and receivers stay full.
    DpsF {
        #[command(flatten)]
        args: TrainArgs,
        /// Kept frequency bins.
        #[arg(long, default_value_t = 9)]
        m_f: usize,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Band-rule frequencies plus exhaustive bound-minimizing search over
    /// transmitter/receiver subsets; writes a pattern file.
    Crb {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model container.
        #[arg(long)]
        model: PathBuf,
        /// Output pattern file.
        #[arg(long)]
        out: PathBuf,
        /// Kept transmitters.
        #[arg(long, default_value_t = 3)]
        m_t: usize,
        /// Kept receivers.
        #[arg(long, default_value_t = 4)]
        m_r: usize,
        /// Kept frequency bins.
        #[arg(long, default_value_t = 9)]
        m_f: usize,
        /// Noise level the bound is evaluated at.
        #[arg(long, default_value_t = 1.0)]
        noise_sigma: f64,
        /// Ceiling on enumerated subset pairs.
        #[arg(long)]
        cap: Option<u64>,
    },
}

/// Evaluation knobs; unset values fall back to config keys, then defaults.
#[derive(Args)]
struct EvalKnobs {
    /// Unrolled depth the plain-solver budget is matched against.
    #[arg(long)]
    layers: Option<usize>,
    /// Plain-solver iterations per layer of depth.
    #[arg(long)]
    iter_factor: Option<usize>,
    /// ℓ₁ weight as a fraction of the calibrated back-projection peak.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Scenes per evaluation batch.
    #[arg(long)]
    chunk_scenes: Option<usize>,
}

impl EvalKnobs {
    fn resolve(&self, cfg: &Config) -> Result<EvalOptions> {
        let d = EvalOptions::default();
        Ok(EvalOptions {
            fista_iter_factor: pick(self.iter_factor, cfg, "iter_factor", d.fista_iter_factor)?,
            n_layer: pick(self.layers, cfg, "layers", d.n_layer)?,
            lambda_scale: pick(self.lambda_scale, cfg, "lambda_scale", d.lambda_scale)?,
            calibration_scenes: pick(None, cfg, "calibration_scenes", d.calibration_scenes)?,
            chunk_scenes: pick(self.chunk_scenes, cfg, "chunk_scenes", d.chunk_scenes)?,
        })
    }
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate one pattern or checkpoint; writes its CDF as CSV.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model container.
        #[arg(long)]
        model: PathBuf,
        /// Test dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// Trained checkpoint (evaluated with its own reconstructor).
        #[arg(long, conflicts_with = "pattern")]
        checkpoint: Option<PathBuf>,
        /// Fixed pattern file (evaluated with the plain solver).
        #[arg(long)]
        pattern: Option<PathBuf>,
        /// Series label in the CSV.
        #[arg(long)]
        label: Option<String>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: EvalKnobs,
    },
    /// Evaluate several methods on one test set; writes CDF CSV, a
    /// vector plot, a comparison report, and a hash manifest.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model container.
        #[arg(long)]
        model: PathBuf,
        /// Shared test dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Named setup bundle; `paper` checks the four standard setups.
        #[arg(long)]
        preset: Option<String>,
        /// Jointly trained checkpoint.
        #[arg(long)]
        jdps: Option<PathBuf>,
        /// Bound-based baseline pattern file.
        #[arg(long)]
        crb: Option<PathBuf>,
        /// Transmitter-only checkpoint.
        #[arg(long)]
        dps_t: Option<PathBuf>,
        /// Frequency-only checkpoint.
        #[arg(long)]
        dps_f: Option<PathBuf>,
        /// Number of random control patterns (plain solver).
        #[arg(long, default_value_t = 0)]
        random: usize,
        /// Seed for the random patterns.
        #[arg(long, default_value_t = 0)]
        random_seed: u64,
        /// Keep counts for the random patterns, as T,R,F.
        #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 9])]
        random_counts: Vec<usize>,
        #[command(flatten)]
        knobs: EvalKnobs,
    },
}

/// Flag value if set, else the config key, else the default.
fn pick<T: std::str::FromStr + Copy>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get::<T>(key)?.unwrap_or(default)),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn load_model(path: &Path) -> Result<MeasurementModel> {
    MeasurementModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Model(cmd) => run_model(cmd),
        Command::Dataset(cmd) => run_dataset(cmd),
        Command::Train(cmd) => run_train(cmd),
        Command::Baseline(cmd) => run_baseline(cmd),
        Command::Eval(cmd) => run_eval(cmd),
    }
}

fn run_model(cmd: ModelCmd) -> Result<()> {
    let ModelCmd::Build { config, out } = cmd;
    let cfg = config.load()?;
    let (geometry, grid, fgrid) = model_parts_from_config(&cfg)?;
    let model = MeasurementModel::build(geometry, grid, fgrid)?;
    model.save(&out)?;
    println!(
        "model: {} transmitters x {} receivers x {} bins over {} pixels ({} rows)",
        model.n_t(),
        model.n_r(),
        model.n_f(),
        model.n_pixels(),
        model.n_rows()
    );
    println!("wrote {} (sha256 {})", out.display(), hex(&model.content_hash()?));
    Ok(())
}

fn run_dataset(cmd: DatasetCmd) -> Result<()> {
    let DatasetCmd::Gen {
        config,
        model,
        out,
        scenes,
        seed,
        snr_db,
        noise_sigma,
        snr_probe_scenes,
    } = cmd;
    let cfg = config.load()?;
    let model = load_model(&model)?;
    let dist = SceneDistribution::from_config(&cfg)?;
    let sigma = match (snr_db, noise_sigma) {
        (Some(db), None) => noise_sigma_for_snr(&model, &dist, db, snr_probe_scenes, seed)?,
        (None, Some(sigma)) => sigma,
        (None, None) => bail!("one of --snr-db or --noise-sigma is required"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let dataset = generate_dataset(&model, &dist, scenes, sigma, seed)?;
    dataset.save(&out)?;
    println!(
        "dataset: {} scenes, noise sigma {:e}, seed {}",
        dataset.scenes.len(),
        dataset.noise_sigma,
        dataset.seed
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_train(cmd: TrainCmd) -> Result<()> {
    match cmd {
        TrainCmd::Jdps { args, m_t, m_r, m_f } => {
            train_one(&args, TrainMode::Joint, (m_t, m_r, m_f), |_, _| {
                Ok(PinnedAxes::none())
            })
        }
        TrainCmd::DpsT { args, m_t, m_f } => {
            let counts = (m_t, usize::MAX, m_f);
            train_one(&args, TrainMode::TransmitterOnly, counts, |model, m_f| {
                let band = band_select_f(&model.fgrid, m_f, model.geometry.f_c)?;
                if !band.band_constrained {
                    eprintln!(
                        "warning: {m_f} bins exceed the preferred band; using unconstrained nearest-to-center bins"
                    );
                }
                Ok(PinnedAxes {
                    t: None,
                    r: Some(Array1::from_elem(model.n_r(), 1.0)),
                    f: Some(band.mask),
                })
            })
        }
        TrainCmd::DpsF { args, m_f } => {
            let counts = (usize::MAX, usize::MAX, m_f);
            train_one(&args, TrainMode::FrequencyOnly, counts, |model, _| {
                Ok(PinnedAxes {
                    t: Some(Array1::from_elem(model.n_t(), 1.0)),
                    r: Some(Array1::from_elem(model.n_r(), 1.0)),
                    f: None,
                })
            })
        }
    }
}

/// Shared training path; `usize::MAX` counts mean "the full axis".
fn train_one(
    args: &TrainArgs,
    mode: TrainMode,
    (m_t, m_r, m_f): (usize, usize, usize),
    make_pins: impl Fn(&MeasurementModel, usize) -> Result<PinnedAxes>,
) -> Result<()> {
    let start = std::time::Instant::now();
    let cfg = args.config.load()?;
    let model = load_model(&args.model)?;
    let dataset = load_dataset(&args.dataset)?;
    let model_hash = model.content_hash()?;
    if dataset.model_hash != model_hash {
        bail!("dataset was generated against a different model");
    }
    let Some(measurements) = dataset.measurements.as_ref() else {
        bail!("dataset holds no measurements");
    };
    let images: Vec<_> = dataset
        .scenes
        .iter()
        .map(|s| s.image(model.n_pixels()))
        .collect();

    let m_t = if m_t == usize::MAX { model.n_t() } else { m_t };
    let m_r = if m_r == usize::MAX { model.n_r() } else { m_r };
    let tc = TrainConfig {
        n_iter: pick(args.iters, &cfg, "iters", 3000)?,
        batch_size: pick(args.batch_size, &cfg, "batch_size", 16)?,
        lr: pick(args.lr, &cfg, "lr", 1e-3)?,
        gamma_init: pick(None, &cfg, "gamma_init", 5.0)?,
        gamma_end: pick(None, &cfg, "gamma_end", 0.5)?,
        seed: args.seed,
        ..Default::default()
    };
    let n_layer = pick(args.layers, &cfg, "layers", 15)?;
    let delta_scale = pick(None, &cfg, "delta_scale", 0.01)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sel = SelectionState::init(model.n_t(), model.n_r(), model.n_f(), m_t, m_r, m_f, &mut rng)?;
    let pinned = make_pins(&model, m_f)?;

    // The network always sees pattern-masked measurements, so its starting
    // point is the solver for the masked operator, not the full one: the
    // step size comes from the masked Gram spectrum (the full-operator step
    // would be more than an order of magnitude too timid at these keep
    // counts) and the layer thresholds from the masked back-projection
    // peak. W starts from the masked Gram to stay contractive; V spans all
    // measurement rows at the masked scale so every axis draw feeds
    // gradients from the first iteration.
    let init_mask = {
        let mut start = sel.clone();
        if let Some(mask) = &pinned.t {
            start.theta_t = mask.clone();
        }
        if let Some(mask) = &pinned.r {
            start.theta_r = mask.clone();
        }
        if let Some(mask) = &pinned.f {
            start.theta_f = mask.clone();
        }
        SelectionPattern::from_state(&start)?.row_mask()
    };
    let masked_op = MaskedOperator::new(&model.a, &init_mask)?;
    let lmax = largest_eigenvalue_ata(&masked_op, PowerIterationOptions::default())?;
    let mu = 1.0 / (lmax * (1.0 + 1e-9));
    let vy_max = measurements
        .iter()
        .take(8)
        .map(|y| {
            masked_op
                .apply_adjoint(y)
                .iter()
                .map(|z| z.norm() * mu)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let a_masked = {
        let mut m = model.a.clone();
        for (mut row, &keep) in m.rows_mut().into_iter().zip(init_mask.iter()) {
            if keep == 0.0 {
                row.fill(Complex64::new(0.0, 0.0));
            }
        }
        m
    };
    let mut net =
        UnrolledNet::fista_init(&CMat::from_complex(&a_masked), mu, n_layer, delta_scale * vy_max)?;
    net.v = CMat::from_complex(&model.a.t().mapv(|z| z.conj() * mu));

    let outcome = train(net, sel, mode, &pinned, measurements, &images, &tc)?;

    if let Some(log_path) = &args.log {
        let mut text = String::new();
        for rec in &outcome.log {
            text.push_str(&rec.to_line());
            text.push('\n');
        }
        std::fs::write(log_path, text)
            .with_context(|| format!("writing log {}", log_path.display()))?;
    }

    let checkpoint = Checkpoint {
        net: outcome.net,
        selection: outcome.selection,
        model_hash,
        delta_scale,
    };
    checkpoint.save(&args.out)?;
    let first = outcome.log.first().expect("nonempty log");
    let last = outcome.log.last().expect("nonempty log");
    println!(
        "trained {} iterations: loss {:e} -> {:e}",
        last.iteration, first.loss, last.loss
    );
    let pattern = SelectionPattern::from_state(&checkpoint.selection)?;
    let (t, r, f) = pattern.counts();
    println!(
        "pattern keeps {t}/{} transmitters, {r}/{} receivers, {f}/{} bins",
        model.n_t(),
        model.n_r(),
        model.n_f()
    );
    println!(
        "wrote {} (sha256 {}) in {:.1}s",
        args.out.display(),
        hex(&checkpoint.content_hash()?),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run_baseline(cmd: BaselineCmd) -> Result<()> {
    let BaselineCmd::Crb {
        config,
        model,
        out,
        m_t,
        m_r,
        m_f,
        noise_sigma,
        cap,
    } = cmd;
    let cfg = config.load()?;
    let model = load_model(&model)?;
    let band = band_select_f(&model.fgrid, m_f, model.geometry.f_c)?;
    if !band.band_constrained {
        eprintln!(
            "warning: {m_f} bins exceed the preferred band; using unconstrained nearest-to-center bins"
        );
    }
    // The worst case is taken over the same region scenes are drawn from.
    let dist = SceneDistribution::from_config(&cfg)?;
    let candidates = model
        .grid
        .pixels_in_rect(dist.x_min, dist.x_max, dist.z_min, dist.z_max);
    let mut spec = CrbSearchSpec::new(m_t, m_r, candidates, noise_sigma, band.mask);
    if let Some(cap) = cap {
        spec.enumeration_cap = cap;
    }
    let result = exhaustive_minmax_search(&model, &spec)?;
    let pattern = result.to_pattern(&spec.fixed_f_mask)?;
    pattern.save(&out)?;
    println!(
        "searched {} subset pairs; worst-case bound {:e}",
        result.pairs_evaluated, result.minmax_value
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run_eval(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run {
            config,
            model,
            dataset,
            checkpoint,
            pattern,
            label,
            out,
            knobs,
        } => {
            let cfg = config.load()?;
            let opts = knobs.resolve(&cfg)?;
            let model = load_model(&model)?;
            let dataset = load_dataset(&dataset)?;
            let result = match (&checkpoint, &pattern) {
                (Some(ckpt_path), None) => {
                    let ckpt = Checkpoint::load(ckpt_path)
                        .with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;
                    let label = label.as_deref().unwrap_or("learned");
                    run_experiment(&model, &dataset, label, Reconstruction::Learned(&ckpt), &opts)?
                }
                (None, Some(pattern_path)) => {
                    let pat = SelectionPattern::load(pattern_path)
                        .with_context(|| format!("loading pattern {}", pattern_path.display()))?;
                    let label = label.as_deref().unwrap_or("pattern");
                    run_experiment(&model, &dataset, label, Reconstruction::Plain(&pat), &opts)?
                }
                _ => bail!("exactly one of --checkpoint or --pattern is required"),
            };
            std::fs::write(&out, cdf_csv(&[result.clone()]))
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}: median mse {:e} over {} scenes in {:.1}s",
                result.label,
                result.median_mse()?,
                result.per_scene_mse.len(),
                result.wall_seconds
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        EvalCmd::Compare {
            config,
            model,
            dataset,
            out_dir,
            preset,
            jdps,
            crb,
            dps_t,
            dps_f,
            random,
            random_seed,
            random_counts,
            knobs,
        } => run_compare(CompareInputs {
            config,
            model,
            dataset,
            out_dir,
            preset,
            jdps,
            crb,
            dps_t,
            dps_f,
            random,
            random_seed,
            random_counts,
            knobs,
        }),
    }
}

struct CompareInputs {
    config: ConfigArgs,
    model: PathBuf,
    dataset: PathBuf,
    out_dir: PathBuf,
    preset: Option<String>,
    jdps: Option<PathBuf>,
    crb: Option<PathBuf>,
    dps_t: Option<PathBuf>,
    dps_f: Option<PathBuf>,
    random: usize,
    random_seed: u64,
    random_counts: Vec<usize>,
    knobs: EvalKnobs,
}

fn run_compare(inputs: CompareInputs) -> Result<()> {
    let cfg = inputs.config.load()?;
    let opts = inputs.knobs.resolve(&cfg)?;
    let model = load_model(&inputs.model)?;
    let dataset = load_dataset(&inputs.dataset)?;

    // Load whatever artifacts were supplied, keeping their counts for the
    // compression report.
    let mut results: Vec<EvalResult> = Vec::new();
    let mut artifact_hashes: Vec<(String, String)> = Vec::new();
    let mut counts: Vec<(String, (usize, usize, usize))> = Vec::new();

    fn load_ckpt(
        path: &Path,
        label: &str,
        hashes: &mut Vec<(String, String)>,
    ) -> Result<Checkpoint> {
        let ckpt = Checkpoint::load(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        hashes.push((label.to_string(), hex(&sha256_file(path)?)));
        Ok(ckpt)
    }

    if let Some(path) = &inputs.jdps {
        let ckpt = load_ckpt(path, "J-DPS", &mut artifact_hashes)?;
        let sel = &ckpt.selection;
        counts.push(("J-DPS".into(), (sel.m_t, sel.m_r, sel.m_f)));
        results.push(run_experiment(
            &model,
            &dataset,
            "J-DPS",
            Reconstruction::Learned(&ckpt),
            &opts,
        )?);
    }
    if let Some(path) = &inputs.crb {
        let pattern = SelectionPattern::load(path)
            .with_context(|| format!("loading pattern {}", path.display()))?;
        artifact_hashes.push(("CRB".to_string(), hex(&sha256_file(path)?)));
        counts.push(("CRB".into(), pattern.counts()));
        results.push(run_experiment(
            &model,
            &dataset,
            "CRB",
            Reconstruction::Plain(&pattern),
            &opts,
        )?);
    }
    if let Some(path) = &inputs.dps_t {
        let ckpt = load_ckpt(path, "DPS-T", &mut artifact_hashes)?;
        let sel = &ckpt.selection;
        counts.push(("DPS-T".into(), (sel.m_t, sel.m_r, sel.m_f)));
        results.push(run_experiment(
            &model,
            &dataset,
            "DPS-T",
            Reconstruction::Learned(&ckpt),
            &opts,
        )?);
    }
    if let Some(path) = &inputs.dps_f {
        let ckpt = load_ckpt(path, "DPS-F", &mut artifact_hashes)?;
        let sel = &ckpt.selection;
        counts.push(("DPS-F".into(), (sel.m_t, sel.m_r, sel.m_f)));
        results.push(run_experiment(
            &model,
            &dataset,
            "DPS-F",
            Reconstruction::Learned(&ckpt),
            &opts,
        )?);
    }
    if inputs.random > 0 && inputs.random_counts.len() != 3 {
        bail!(
            "--random-counts expects exactly three values T,R,F, got {}",
            inputs.random_counts.len()
        );
    }
    for k in 0..inputs.random {
        let (m_t, m_r, m_f) = (
            inputs.random_counts[0],
            inputs.random_counts[1],
            inputs.random_counts[2],
        );
        let pattern = random_pattern(
            (model.n_t(), model.n_r(), model.n_f()),
            (m_t, m_r, m_f),
            inputs.random_seed.wrapping_add(k as u64),
        )?;
        let label = format!("RANDOM-{:02}", k + 1);
        counts.push((label.clone(), (m_t, m_r, m_f)));
        results.push(run_experiment(
            &model,
            &dataset,
            &label,
            Reconstruction::Plain(&pattern),
            &opts,
        )?);
    }
    if results.is_empty() {
        bail!("nothing to compare: pass artifacts and/or --random");
    }

    if let Some(preset) = &inputs.preset {
        check_preset(preset, &model, &counts)?;
    }

    std::fs::create_dir_all(&inputs.out_dir)
        .with_context(|| format!("creating {}", inputs.out_dir.display()))?;
    let csv_path = inputs.out_dir.join("cdf.csv");
    let svg_path = inputs.out_dir.join("cdf.svg");
    let report_path = inputs.out_dir.join("report.txt");
    let manifest_path = inputs.out_dir.join("manifest.txt");

    std::fs::write(&csv_path, cdf_csv(&results))?;
    std::fs::write(&svg_path, cdf_svg(&results))?;

    let mut report = String::new();
    let (n_t, n_r, n_f) = (model.n_t(), model.n_r(), model.n_f());
    report.push_str("label,kept_t,kept_r,kept_f,compression,median_mse\n");
    for (result, (label, (m_t, m_r, m_f))) in results.iter().zip(&counts) {
        let spec = jdps_core::harness::ExperimentSpec {
            method: Method::Random,
            m_t: *m_t,
            m_r: *m_r,
            m_f: *m_f,
            reconstructor: Reconstructor::Fista,
        };
        let _ = writeln!(
            report,
            "{label},{m_t},{m_r},{m_f},{},{:e}",
            spec.compression_display(n_t, n_r, n_f),
            result.median_mse()?
        );
    }
    report.push('\n');
    report.push_str(&dominance_report(&results));
    std::fs::write(&report_path, &report)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "model {}", hex(&sha256_file(&inputs.model)?));
    let _ = writeln!(manifest, "dataset {}", hex(&sha256_file(&inputs.dataset)?));
    for (label, hash) in &artifact_hashes {
        let _ = writeln!(manifest, "artifact {label} {hash}");
    }
    let _ = writeln!(manifest, "cdf.csv {}", hex(&sha256_file(&csv_path)?));
    let _ = writeln!(manifest, "cdf.svg {}", hex(&sha256_file(&svg_path)?));
    let _ = writeln!(manifest, "report.txt {}", hex(&sha256_file(&report_path)?));
    std::fs::write(&manifest_path, &manifest)?;

    for result in &results {
        println!(
            "{}: median mse {:e} ({:.1}s)",
            result.label,
            result.median_mse()?,
            result.wall_seconds
        );
    }
    println!("wrote {}", inputs.out_dir.display());
    Ok(())
}

/// `paper` asserts the supplied artifacts carry the four standard setups
/// on the standard model axes.
fn check_preset(
    preset: &str,
    model: &MeasurementModel,
    counts: &[(String, (usize, usize, usize))],
) -> Result<()> {
    if preset != "paper" {
        bail!("unknown preset {preset:?} (expected \"paper\")");
    }
    if (model.n_t(), model.n_r(), model.n_f()) != (8, 8, 65) {
        bail!(
            "preset paper expects the 8 x 8 x 65 model, got {} x {} x {}",
            model.n_t(),
            model.n_r(),
            model.n_f()
        );
    }
    for setup in reference_setups() {
        let label = setup.method.label();
        if setup.method == Method::Random {
            continue;
        }
        let Some((_, got)) = counts.iter().find(|(l, _)| l == label) else {
            bail!("preset paper needs a {label} artifact");
        };
        let want = (setup.m_t, setup.m_r, setup.m_f);
        if *got != want {
            bail!("{label} artifact keeps {got:?}, preset expects {want:?}");
        }
    }
    Ok(())
}
