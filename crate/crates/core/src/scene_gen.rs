//! Synthetic scatterer scenes and dataset persistence.
//!
//! Scenes place a small random number of point scatterers on distinct
//! pixel centers inside a designated rectangle, with complex Gaussian
//! amplitudes. Datasets pair each scene with a simulated measurement and
//! round-trip losslessly through a versioned binary container plus a
//! human-readable provenance manifest.

use std::path::Path;

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Config;
use crate::container::{hex, ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::forward_model::{MeasurementModel, PixelGrid, Scatterer, Scene};

/// Container magic for serialized datasets.
pub const DATASET_MAGIC: &[u8; 4] = b"FMCD";
pub const DATASET_VERSION: u32 = 1;

/// Stream-id offset separating noise draws from scene draws, so the same
/// seed yields identical scenes with and without measurement noise.
const NOISE_STREAM_BASE: u64 = 1 << 32;

/// Distribution of random scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDistribution {
    /// Rectangle containing all scatterers, in meters (inclusive bounds).
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Support of the uniform scatterer-count distribution.
    pub k_support: Vec<usize>,
    /// Mean of the complex amplitude distribution.
    pub amplitude_mean: Complex64,
    /// Standard deviation of the complex amplitude: total variance
    /// `amplitude_std²` splits evenly between real and imaginary parts.
    pub amplitude_std: f64,
}

impl Default for SceneDistribution {
    /// One to five scatterers in the central 2 mm × 1.6 mm region, with
    /// amplitudes of mean 10 and total variance 5.
    fn default() -> Self {
        Self {
            x_min: 4.0e-3,
            x_max: 6.0e-3,
            z_min: 3.2e-3,
            z_max: 4.8e-3,
            k_support: vec![1, 2, 3, 4, 5],
            amplitude_mean: Complex64::new(10.0, 0.0),
            amplitude_std: 5.0_f64.sqrt(),
        }
    }
}

impl SceneDistribution {
    pub fn validate(&self, grid: &PixelGrid) -> Result<()> {
        if self.k_support.is_empty() || self.k_support.iter().any(|&k| k == 0) {
            return Err(Error::InvalidParameter(
                "scatterer-count support must be nonempty with all values ≥ 1".into(),
            ));
        }
        if !(self.x_min < self.x_max && self.z_min < self.z_max) {
            return Err(Error::InvalidParameter("degenerate scatterer region".into()));
        }
        if self.amplitude_std < 0.0 {
            return Err(Error::InvalidParameter("negative amplitude std".into()));
        }
        let pixels = grid.pixels_in_rect(self.x_min, self.x_max, self.z_min, self.z_max);
        let k_max = *self.k_support.iter().max().unwrap();
        if pixels.len() < k_max {
            return Err(Error::InvalidParameter(format!(
                "region holds {} pixel centers but up to {k_max} scatterers are requested",
                pixels.len()
            )));
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut d = Self::default();
        d.x_min = cfg.get_or("region_x_min", d.x_min)?;
        d.x_max = cfg.get_or("region_x_max", d.x_max)?;
        d.z_min = cfg.get_or("region_z_min", d.z_min)?;
        d.z_max = cfg.get_or("region_z_max", d.z_max)?;
        if let Some(support) = cfg.get_list::<usize>("k_support")? {
            d.k_support = support;
        }
        d.amplitude_mean = Complex64::new(
            cfg.get_or("amplitude_mean_re", d.amplitude_mean.re)?,
            cfg.get_or("amplitude_mean_im", d.amplitude_mean.im)?,
        );
        d.amplitude_std = cfg.get_or("amplitude_std", d.amplitude_std)?;
        Ok(d)
    }
}

/// Draws one scene: a count from the support, distinct pixels inside the
/// region (collisions are resampled), and complex Gaussian amplitudes.
pub fn sample_scene<R: Rng>(
    dist: &SceneDistribution,
    grid: &PixelGrid,
    rng: &mut R,
) -> Result<Scene> {
    dist.validate(grid)?;
    let region = grid.pixels_in_rect(dist.x_min, dist.x_max, dist.z_min, dist.z_max);
    let k = dist.k_support[rng.gen_range(0..dist.k_support.len())];
    let component_std = dist.amplitude_std / std::f64::consts::SQRT_2;
    let normal = Normal::new(0.0, component_std)
        .map_err(|e| Error::InvalidParameter(format!("amplitude distribution: {e}")))?;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut scatterers = Vec::with_capacity(k);
    while scatterers.len() < k {
        let pixel = region[rng.gen_range(0..region.len())];
        if chosen.contains(&pixel) {
            continue;
        }
        chosen.push(pixel);
        let (x, z) = grid.pixel_center(pixel);
        let amplitude = Complex64::new(
            dist.amplitude_mean.re + normal.sample(rng),
            dist.amplitude_mean.im + normal.sample(rng),
        );
        scatterers.push(Scatterer {
            pixel,
            x,
            z,
            amplitude,
        });
    }
    Ok(Scene { scatterers })
}

/// Scenes paired with (optional) measurements, plus everything needed to
/// regenerate or validate them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub measurements: Option<Vec<Array1<Complex64>>>,
    pub seed: u64,
    pub noise_sigma: f64,
    pub distribution: SceneDistribution,
    pub n_pixels: usize,
    pub model_hash: [u8; 32],
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn measurement_len(&self) -> usize {
        self.measurements
            .as_ref()
            .and_then(|m| m.first())
            .map_or(0, |y| y.len())
    }
}

/// Per-scene generator: one fixed seed, a distinct stream per scene, so
/// scenes can be drawn in any order (or in parallel) identically.
pub fn scene_rng(seed: u64, scene_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_index as u64);
    rng
}

fn noise_rng(seed: u64, scene_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM_BASE + scene_index as u64);
    rng
}

/// Generates `n` scenes with paired measurements at a fixed noise level.
pub fn generate_dataset(
    model: &MeasurementModel,
    dist: &SceneDistribution,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("dataset needs at least one scene".into()));
    }
    dist.validate(&model.grid)?;
    let mut scenes = Vec::with_capacity(n);
    let mut measurements = Vec::with_capacity(n);
    for idx in 0..n {
        let scene = sample_scene(dist, &model.grid, &mut scene_rng(seed, idx))?;
        let y = model.simulate_measurement(&scene, noise_sigma, &mut noise_rng(seed, idx))?;
        scenes.push(scene);
        measurements.push(y);
    }
    Ok(Dataset {
        scenes,
        measurements: Some(measurements),
        seed,
        noise_sigma,
        distribution: dist.clone(),
        n_pixels: model.n_pixels(),
        model_hash: model.content_hash()?,
    })
}

/// Noise level for a target signal-to-noise ratio: the per-component noise
/// variance σ² is the mean noiseless per-component power divided by
/// `10^(snr_db/10)`, estimated over `n_probe` scenes of the distribution.
pub fn noise_sigma_for_snr(
    model: &MeasurementModel,
    dist: &SceneDistribution,
    snr_db: f64,
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    if n_probe == 0 {
        return Err(Error::InvalidParameter("need at least one probe scene".into()));
    }
    let mut power_sum = 0.0;
    let mut count = 0usize;
    for idx in 0..n_probe {
        let scene = sample_scene(dist, &model.grid, &mut scene_rng(seed, idx))?;
        let y = model.acquire_clean(&scene)?;
        power_sum += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += y.len();
    }
    let mean_power = power_sum / count as f64;
    Ok((mean_power / 10f64.powf(snr_db / 10.0)).sqrt())
}

impl Dataset {
    /// Canonical serialization; `save` writes exactly these bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut w = ContainerWriter::new(&mut buf, DATASET_MAGIC, DATASET_VERSION)?;
            w.put_bytes(&self.model_hash)?;
            w.put_u64(self.seed)?;
            w.put_f64(self.noise_sigma)?;
            let d = &self.distribution;
            w.put_f64(d.x_min)?;
            w.put_f64(d.x_max)?;
            w.put_f64(d.z_min)?;
            w.put_f64(d.z_max)?;
            w.put_u32(d.k_support.len() as u32)?;
            for &k in &d.k_support {
                w.put_u32(k as u32)?;
            }
            w.put_f64(d.amplitude_mean.re)?;
            w.put_f64(d.amplitude_mean.im)?;
            w.put_f64(d.amplitude_std)?;
            w.put_u64(self.n_pixels as u64)?;
            w.put_u64(self.scenes.len() as u64)?;
            w.put_u32(u32::from(self.measurements.is_some()))?;
            w.put_u64(self.measurement_len() as u64)?;
            for scene in &self.scenes {
                w.put_u32(scene.scatterers.len() as u32)?;
                for s in &scene.scatterers {
                    w.put_u32(s.pixel as u32)?;
                    w.put_f64(s.x)?;
                    w.put_f64(s.z)?;
                    w.put_f64(s.amplitude.re)?;
                    w.put_f64(s.amplitude.im)?;
                }
            }
            if let Some(measurements) = &self.measurements {
                for y in measurements {
                    for z in y.iter() {
                        w.put_f64(z.re)?;
                        w.put_f64(z.im)?;
                    }
                }
            }
            w.finish()?;
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ContainerReader::new(bytes, DATASET_MAGIC, DATASET_VERSION)?;
        let mut model_hash = [0u8; 32];
        model_hash.copy_from_slice(&r.get_bytes(32)?);
        let seed = r.get_u64()?;
        let noise_sigma = r.get_f64()?;
        let x_min = r.get_f64()?;
        let x_max = r.get_f64()?;
        let z_min = r.get_f64()?;
        let z_max = r.get_f64()?;
        let n_support = r.get_u32()? as usize;
        let mut k_support = Vec::with_capacity(n_support);
        for _ in 0..n_support {
            k_support.push(r.get_u32()? as usize);
        }
        let amplitude_mean = Complex64::new(r.get_f64()?, r.get_f64()?);
        let amplitude_std = r.get_f64()?;
        let distribution = SceneDistribution {
            x_min,
            x_max,
            z_min,
            z_max,
            k_support,
            amplitude_mean,
            amplitude_std,
        };
        let n_pixels = r.get_len()?;
        let n_scenes = r.get_len()?;
        let has_measurements = r.get_u32()? != 0;
        let meas_len = r.get_len()?;
        let mut scenes = Vec::with_capacity(n_scenes);
        for _ in 0..n_scenes {
            let k = r.get_u32()? as usize;
            let mut scatterers = Vec::with_capacity(k);
            for _ in 0..k {
                let pixel = r.get_u32()? as usize;
                let x = r.get_f64()?;
                let z = r.get_f64()?;
                let amplitude = Complex64::new(r.get_f64()?, r.get_f64()?);
                if pixel >= n_pixels {
                    return Err(Error::Format(format!(
                        "scatterer pixel {pixel} outside declared grid of {n_pixels}"
                    )));
                }
                scatterers.push(Scatterer {
                    pixel,
                    x,
                    z,
                    amplitude,
                });
            }
            scenes.push(Scene { scatterers });
        }
        let measurements = if has_measurements {
            let mut all = Vec::with_capacity(n_scenes);
            for _ in 0..n_scenes {
                let mut y = Array1::from_elem(meas_len, Complex64::new(0.0, 0.0));
                for z in y.iter_mut() {
                    *z = Complex64::new(r.get_f64()?, r.get_f64()?);
                }
                all.push(y);
            }
            Some(all)
        } else {
            None
        };
        r.expect_eof()?;
        Ok(Self {
            scenes,
            measurements,
            seed,
            noise_sigma,
            distribution,
            n_pixels,
            model_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Exact byte size of the serialization, from the layout arithmetic.
    pub fn predicted_byte_size(&self) -> usize {
        let header = 4 + 4; // magic + version
        let provenance = 32 + 8 + 8; // model hash, seed, noise sigma
        let dist = 4 * 8 + 4 + 4 * self.distribution.k_support.len() + 3 * 8;
        let counts = 8 + 8 + 4 + 8; // n_pixels, n_scenes, has_measurements, meas_len
        let scenes: usize = self
            .scenes
            .iter()
            .map(|s| 4 + s.scatterers.len() * (4 + 4 * 8))
            .sum();
        let measurements = if self.measurements.is_some() {
            self.scenes.len() * self.measurement_len() * 16
        } else {
            0
        };
        header + provenance + dist + counts + scenes + measurements
    }

    /// Human-readable provenance record for the dataset file.
    pub fn manifest_text(&self) -> String {
        let d = &self.distribution;
        let support = d
            .k_support
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut cfg = Config::new();
        cfg.set("model_hash", hex(&self.model_hash));
        cfg.set("seed", self.seed);
        cfg.set("n_scenes", self.scenes.len());
        cfg.set("noise_sigma", format!("{:e}", self.noise_sigma));
        cfg.set("region_x_min", format!("{:e}", d.x_min));
        cfg.set("region_x_max", format!("{:e}", d.x_max));
        cfg.set("region_z_min", format!("{:e}", d.z_min));
        cfg.set("region_z_max", format!("{:e}", d.z_max));
        cfg.set("k_support", support);
        cfg.set("amplitude_mean_re", format!("{:e}", d.amplitude_mean.re));
        cfg.set("amplitude_mean_im", format!("{:e}", d.amplitude_mean.im));
        cfg.set("amplitude_std", format!("{:e}", d.amplitude_std));
        cfg.set("has_measurements", self.measurements.is_some());
        cfg.to_text()
    }
}
