//! Frequency-domain measurement model for full-matrix-capture ultrasound.
//!
//! Every transmitter/receiver pair of a uniform linear array insonifies a
//! gridded specimen containing point scatterers. Each recorded channel is a
//! Gaussian pulse spectrum delayed by the two-leg travel time to the
//! scatterer, so the whole acquisition is linear in the vector of complex
//! pixel amplitudes: `y = A·x + n`. This module builds `A`, synthesizes
//! noisy measurements, and persists the model.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Config;
use crate::container::{sha256_bytes, ContainerReader, ContainerWriter};
use crate::error::{Error, Result};

/// Container magic for serialized measurement models.
pub const MODEL_MAGIC: &[u8; 4] = b"FMCM";
pub const MODEL_VERSION: u32 = 1;

/// Default cap on matrix entries (rows × columns) before `build` refuses.
pub const DEFAULT_MAX_MATRIX_ENTRIES: usize = 1 << 27;

/// Relative tolerance used when validating uniform element spacing.
const SPACING_REL_TOL: f64 = 1e-9;

/// Transducer array and pulse description.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Number of elements; each one both transmits and receives.
    pub n_elements: usize,
    /// Element x-positions in meters along the array face.
    pub element_x: Vec<f64>,
    /// Gaussian bandwidth factor in Hz².
    pub alpha: f64,
    /// Pulse center frequency in Hz.
    pub f_c: f64,
    /// Pulse phase in radians.
    pub phi: f64,
    /// Wave velocity in the specimen, m/s.
    pub c0: f64,
    /// Sampling rate in Hz.
    pub f_s: f64,
}

impl Default for ArrayGeometry {
    /// Eight-element array with 1 mm pitch centered over an 8 mm aperture,
    /// 4.5 MHz pulse, 6400 m/s longitudinal velocity, 40 MHz sampling.
    fn default() -> Self {
        let n_elements = 8;
        let pitch = 1.0e-3;
        Self {
            n_elements,
            element_x: (0..n_elements).map(|i| (i as f64 + 0.5) * pitch).collect(),
            alpha: 4.47e6_f64 * 4.47e6_f64,
            f_c: 4.5e6,
            phi: 3.0 * PI / 4.0,
            c0: 6400.0,
            f_s: 40.0e6,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 || self.element_x.len() != self.n_elements {
            return Err(Error::InvalidParameter(format!(
                "element count {} does not match {} positions",
                self.n_elements,
                self.element_x.len()
            )));
        }
        if !(self.alpha > 0.0 && self.f_c > 0.0 && self.c0 > 0.0) {
            return Err(Error::InvalidParameter(
                "alpha, f_c, and c0 must be positive".into(),
            ));
        }
        if self.f_s <= 2.0 * self.f_c {
            return Err(Error::InvalidParameter(format!(
                "sampling rate {} must exceed twice the center frequency {}",
                self.f_s, self.f_c
            )));
        }
        if self.n_elements > 1 {
            let pitch = self.element_x[1] - self.element_x[0];
            if pitch <= 0.0 {
                return Err(Error::InvalidParameter(
                    "element positions must be strictly increasing".into(),
                ));
            }
            for w in self.element_x.windows(2) {
                let step = w[1] - w[0];
                if step <= 0.0 || (step - pitch).abs() > SPACING_REL_TOL * pitch {
                    return Err(Error::InvalidParameter(
                        "element positions must be uniformly spaced".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Rectangular pixel grid covering the specimen cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub n_z: usize,
    pub n_x: usize,
    pub d_z: f64,
    pub d_x: f64,
    /// Grid corner position (x, z) in meters, relative to the array.
    pub origin_x: f64,
    pub origin_z: f64,
}

impl Default for PixelGrid {
    /// 40 × 32 grid of 0.2 mm pixels covering 8 mm × 6.4 mm under the array.
    fn default() -> Self {
        Self {
            n_z: 32,
            n_x: 40,
            d_z: 0.2e-3,
            d_x: 0.2e-3,
            origin_x: 0.0,
            origin_z: 0.0,
        }
    }
}

impl PixelGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_z == 0 || self.n_x == 0 || self.d_z <= 0.0 || self.d_x <= 0.0 {
            return Err(Error::InvalidParameter(
                "grid needs positive pixel counts and sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn n_pixels(&self) -> usize {
        self.n_z * self.n_x
    }

    /// Flat pixel index; depth varies fastest within a lateral column.
    pub fn pixel_index(&self, ix: usize, iz: usize) -> usize {
        debug_assert!(ix < self.n_x && iz < self.n_z);
        ix * self.n_z + iz
    }

    /// Center coordinates (x, z) in meters of a flat pixel index.
    pub fn pixel_center(&self, k: usize) -> (f64, f64) {
        let ix = k / self.n_z;
        let iz = k % self.n_z;
        (
            self.origin_x + (ix as f64 + 0.5) * self.d_x,
            self.origin_z + (iz as f64 + 0.5) * self.d_z,
        )
    }

    /// All flat pixel indices whose centers lie inside a rectangle
    /// (inclusive bounds, meters).
    pub fn pixels_in_rect(&self, x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for ix in 0..self.n_x {
            for iz in 0..self.n_z {
                let k = self.pixel_index(ix, iz);
                let (x, z) = self.pixel_center(k);
                if x >= x_min && x <= x_max && z >= z_min && z <= z_max {
                    out.push(k);
                }
            }
        }
        out
    }
}

/// Retained one-sided Fourier bins of the sampled time record.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub n_time: usize,
    pub freqs: Vec<f64>,
}

impl FrequencyGrid {
    /// One-sided spectrum of an `n_time`-sample record at rate `f_s`:
    /// `floor(n_time/2)+1` bins spaced `f_s/n_time` apart, starting at DC.
    pub fn one_sided(n_time: usize, f_s: f64) -> Result<Self> {
        if n_time == 0 || f_s <= 0.0 {
            return Err(Error::InvalidParameter(
                "frequency grid needs n_time ≥ 1 and positive f_s".into(),
            ));
        }
        let n_f = n_time / 2 + 1;
        let df = f_s / n_time as f64;
        Ok(Self {
            n_time,
            freqs: (0..n_f).map(|k| k as f64 * df).collect(),
        })
    }

    pub fn n_f(&self) -> usize {
        self.freqs.len()
    }
}

/// A point scatterer pinned to a pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub pixel: usize,
    pub x: f64,
    pub z: f64,
    pub amplitude: Complex64,
}

/// A sparse specimen: a handful of isolated point scatterers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
}

impl Scene {
    /// Dense complex image: zero except at scatterer pixels, where it holds
    /// the scatterer amplitude. Built on demand so the zero-elsewhere
    /// invariant holds by construction.
    pub fn image(&self, n_pixels: usize) -> Array1<Complex64> {
        let mut img = Array1::from_elem(n_pixels, Complex64::new(0.0, 0.0));
        for s in &self.scatterers {
            img[s.pixel] = s.amplitude;
        }
        img
    }
}

/// Two-leg travel time from a transmitter at `tx_x` down to the scatterer
/// and back up to a receiver at `rx_x`, both on the z = 0 line.
pub fn time_of_flight(scatterer: (f64, f64), tx_x: f64, rx_x: f64, c0: f64) -> Result<f64> {
    if c0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "wave velocity must be positive, got {c0}"
        )));
    }
    let (x, z) = scatterer;
    let down = ((x - tx_x) * (x - tx_x) + z * z).sqrt();
    let up = ((x - rx_x) * (x - rx_x) + z * z).sqrt();
    Ok((down + up) / c0)
}

/// Gaussian-envelope pulse spectrum of one scatterer echo at frequency `f`:
/// `(amplitude/2)·√(π/α)·exp(−π²(f−f_c)²/α)·exp(j(φ − 2πfτ))`.
///
/// The magnitude peaks at `f = f_c` and does not depend on the delay.
pub fn pulse_spectrum(f: f64, geometry: &ArrayGeometry, amplitude: Complex64, tau: f64) -> Complex64 {
    let df = f - geometry.f_c;
    let envelope =
        0.5 * (PI / geometry.alpha).sqrt() * (-PI * PI * df * df / geometry.alpha).exp();
    let phase = geometry.phi - 2.0 * PI * f * tau;
    amplitude * Complex64::from_polar(envelope, phase)
}

/// The assembled linear acquisition model `y = A·x + n`.
///
/// Rows stack channels with frequency varying fastest, then receiver, then
/// transmitter: row `(i, j, f) = (i·N_R + j)·N_F + f`. Columns are pixels
/// with depth varying fastest: column `k = ix·N_z + iz`. Each column is the
/// noiseless acquisition of a unit scatterer at that pixel. The matrix is
/// built once and never mutated, so it can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub geometry: ArrayGeometry,
    pub grid: PixelGrid,
    pub fgrid: FrequencyGrid,
    pub a: Array2<Complex64>,
}

impl MeasurementModel {
    pub fn n_t(&self) -> usize {
        self.geometry.n_elements
    }

    pub fn n_r(&self) -> usize {
        self.geometry.n_elements
    }

    pub fn n_f(&self) -> usize {
        self.fgrid.n_f()
    }

    pub fn n_rows(&self) -> usize {
        self.n_t() * self.n_r() * self.n_f()
    }

    pub fn n_pixels(&self) -> usize {
        self.grid.n_pixels()
    }

    /// Flat row index of channel (transmitter i, receiver j, frequency f).
    pub fn row_index(&self, i: usize, j: usize, f: usize) -> usize {
        debug_assert!(i < self.n_t() && j < self.n_r() && f < self.n_f());
        (i * self.n_r() + j) * self.n_f() + f
    }

    /// Builds the model with the default size cap.
    pub fn build(geometry: ArrayGeometry, grid: PixelGrid, fgrid: FrequencyGrid) -> Result<Self> {
        Self::build_capped(geometry, grid, fgrid, DEFAULT_MAX_MATRIX_ENTRIES)
    }

    /// Builds the model, refusing when rows × columns exceeds `max_entries`.
    pub fn build_capped(
        geometry: ArrayGeometry,
        grid: PixelGrid,
        fgrid: FrequencyGrid,
        max_entries: usize,
    ) -> Result<Self> {
        geometry.validate()?;
        grid.validate()?;
        let n_t = geometry.n_elements;
        let n_r = geometry.n_elements;
        let n_f = fgrid.n_f();
        let n_rows = n_t * n_r * n_f;
        let n_pix = grid.n_pixels();
        let entries = n_rows
            .checked_mul(n_pix)
            .ok_or_else(|| Error::ResourceLimit("matrix entry count overflows usize".into()))?;
        if entries > max_entries {
            return Err(Error::ResourceLimit(format!(
                "matrix would hold {entries} entries, above the cap of {max_entries}"
            )));
        }

        // Envelope depends only on frequency; precompute it per bin.
        let envelope: Vec<f64> = fgrid
            .freqs
            .iter()
            .map(|&f| {
                let df = f - geometry.f_c;
                0.5 * (PI / geometry.alpha).sqrt() * (-PI * PI * df * df / geometry.alpha).exp()
            })
            .collect();

        let mut a = Array2::from_elem((n_rows, n_pix), Complex64::new(0.0, 0.0));
        a.axis_iter_mut(Axis(1))
            .into_par_iter()
            .enumerate()
            .for_each(|(k, mut col)| {
                let (x, z) = grid.pixel_center(k);
                let mut row = 0;
                for i in 0..n_t {
                    for j in 0..n_r {
                        let down = {
                            let dx = x - geometry.element_x[i];
                            (dx * dx + z * z).sqrt()
                        };
                        let up = {
                            let dx = x - geometry.element_x[j];
                            (dx * dx + z * z).sqrt()
                        };
                        let tau = (down + up) / geometry.c0;
                        for (f_idx, &f) in fgrid.freqs.iter().enumerate() {
                            let phase = geometry.phi - 2.0 * PI * f * tau;
                            col[row + f_idx] = Complex64::from_polar(envelope[f_idx], phase);
                        }
                        row += n_f;
                    }
                }
            });

        Ok(Self {
            geometry,
            grid,
            fgrid,
            a,
        })
    }

    /// Noiseless acquisition `A·x` of a sparse scene, summed column by
    /// column over its scatterers.
    pub fn acquire_clean(&self, scene: &Scene) -> Result<Array1<Complex64>> {
        let n_pix = self.n_pixels();
        let mut y = Array1::from_elem(self.n_rows(), Complex64::new(0.0, 0.0));
        for s in &scene.scatterers {
            if s.pixel >= n_pix {
                return Err(Error::DimensionMismatch(format!(
                    "scatterer pixel {} outside grid of {n_pix} pixels",
                    s.pixel
                )));
            }
            let col = self.a.column(s.pixel);
            for (yi, &aik) in y.iter_mut().zip(col.iter()) {
                *yi += aik * s.amplitude;
            }
        }
        Ok(y)
    }

    /// Noisy acquisition `A·x + n` with circularly symmetric complex
    /// Gaussian noise of per-component variance `noise_sigma²` (each real
    /// part and imaginary part has variance `noise_sigma²/2`). Zero sigma
    /// draws nothing from the generator.
    pub fn simulate_measurement<R: Rng>(
        &self,
        scene: &Scene,
        noise_sigma: f64,
        rng: &mut R,
    ) -> Result<Array1<Complex64>> {
        if noise_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be nonnegative, got {noise_sigma}"
            )));
        }
        let mut y = self.acquire_clean(scene)?;
        if noise_sigma > 0.0 {
            let component_std = noise_sigma / std::f64::consts::SQRT_2;
            let normal = Normal::new(0.0, component_std)
                .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
            for yi in y.iter_mut() {
                let re = normal.sample(rng);
                let im = normal.sample(rng);
                *yi += Complex64::new(re, im);
            }
        }
        Ok(y)
    }

    /// Canonical little-endian serialization; `save` writes exactly these
    /// bytes, so the content hash equals the file hash.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut w = ContainerWriter::new(&mut buf, MODEL_MAGIC, MODEL_VERSION)?;
            w.put_u32(self.geometry.n_elements as u32)?;
            w.put_f64(self.geometry.alpha)?;
            w.put_f64(self.geometry.f_c)?;
            w.put_f64(self.geometry.phi)?;
            w.put_f64(self.geometry.c0)?;
            w.put_f64(self.geometry.f_s)?;
            w.put_f64_vec(&Array1::from_vec(self.geometry.element_x.clone()))?;
            w.put_u32(self.grid.n_z as u32)?;
            w.put_u32(self.grid.n_x as u32)?;
            w.put_f64(self.grid.d_z)?;
            w.put_f64(self.grid.d_x)?;
            w.put_f64(self.grid.origin_x)?;
            w.put_f64(self.grid.origin_z)?;
            w.put_u32(self.fgrid.n_time as u32)?;
            w.put_f64_vec(&Array1::from_vec(self.fgrid.freqs.clone()))?;
            w.put_u64(self.n_rows() as u64)?;
            w.put_u64(self.n_pixels() as u64)?;
            // Column-major interleaved (re, im) pairs.
            for col in self.a.axis_iter(Axis(1)) {
                for z in col.iter() {
                    w.put_f64(z.re)?;
                    w.put_f64(z.im)?;
                }
            }
            w.finish()?;
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ContainerReader::new(bytes, MODEL_MAGIC, MODEL_VERSION)?;
        let n_elements = r.get_u32()? as usize;
        let alpha = r.get_f64()?;
        let f_c = r.get_f64()?;
        let phi = r.get_f64()?;
        let c0 = r.get_f64()?;
        let f_s = r.get_f64()?;
        let element_x = r.get_f64_vec()?.to_vec();
        let geometry = ArrayGeometry {
            n_elements,
            element_x,
            alpha,
            f_c,
            phi,
            c0,
            f_s,
        };
        let n_z = r.get_u32()? as usize;
        let n_x = r.get_u32()? as usize;
        let d_z = r.get_f64()?;
        let d_x = r.get_f64()?;
        let origin_x = r.get_f64()?;
        let origin_z = r.get_f64()?;
        let grid = PixelGrid {
            n_z,
            n_x,
            d_z,
            d_x,
            origin_x,
            origin_z,
        };
        let n_time = r.get_u32()? as usize;
        let freqs = r.get_f64_vec()?.to_vec();
        let fgrid = FrequencyGrid { n_time, freqs };
        let n_rows = r.get_len()?;
        let n_pix = r.get_len()?;
        geometry.validate()?;
        grid.validate()?;
        if n_rows != n_elements * n_elements * fgrid.n_f() || n_pix != grid.n_pixels() {
            return Err(Error::Format(format!(
                "declared matrix shape {n_rows}×{n_pix} disagrees with geometry"
            )));
        }
        let mut a = Array2::from_elem((n_rows, n_pix), Complex64::new(0.0, 0.0));
        for k in 0..n_pix {
            for i in 0..n_rows {
                let re = r.get_f64()?;
                let im = r.get_f64()?;
                a[[i, k]] = Complex64::new(re, im);
            }
        }
        r.expect_eof()?;
        Ok(Self {
            geometry,
            grid,
            fgrid,
            a,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the canonical serialization; datasets and checkpoints
    /// record it so mismatched artifacts fail fast.
    pub fn content_hash(&self) -> Result<[u8; 32]> {
        Ok(sha256_bytes(&self.to_bytes()?))
    }
}

/// Builds the three model ingredients from a `key = value` configuration,
/// falling back to the standard benchmark values for absent keys.
pub fn model_parts_from_config(
    cfg: &Config,
) -> Result<(ArrayGeometry, PixelGrid, FrequencyGrid)> {
    let mut geometry = ArrayGeometry::default();
    if let Some(n) = cfg.get::<usize>("n_elements")? {
        let pitch = cfg.get_or("pitch", 1.0e-3)?;
        let offset = cfg.get_or("element_offset", pitch / 2.0)?;
        geometry.n_elements = n;
        geometry.element_x = (0..n).map(|i| offset + i as f64 * pitch).collect();
    } else if cfg.contains("pitch") || cfg.contains("element_offset") {
        let pitch = cfg.get_or("pitch", 1.0e-3)?;
        let offset = cfg.get_or("element_offset", pitch / 2.0)?;
        geometry.element_x = (0..geometry.n_elements)
            .map(|i| offset + i as f64 * pitch)
            .collect();
    }
    geometry.alpha = cfg.get_or("alpha", geometry.alpha)?;
    geometry.f_c = cfg.get_or("f_c", geometry.f_c)?;
    geometry.phi = cfg.get_or("phi", geometry.phi)?;
    geometry.c0 = cfg.get_or("c0", geometry.c0)?;
    geometry.f_s = cfg.get_or("f_s", geometry.f_s)?;

    let mut grid = PixelGrid::default();
    grid.n_z = cfg.get_or("n_z", grid.n_z)?;
    grid.n_x = cfg.get_or("n_x", grid.n_x)?;
    grid.d_z = cfg.get_or("d_z", grid.d_z)?;
    grid.d_x = cfg.get_or("d_x", grid.d_x)?;
    grid.origin_x = cfg.get_or("origin_x", grid.origin_x)?;
    grid.origin_z = cfg.get_or("origin_z", grid.origin_z)?;

    let n_time = cfg.get_or("n_time", 128usize)?;
    let fgrid = FrequencyGrid::one_sided(n_time, geometry.f_s)?;

    geometry.validate()?;
    grid.validate()?;
    Ok((geometry, grid, fgrid))
}

/// A small model for unit and property tests: trims element count, record
/// length, and grid so dense checks stay fast.
#[cfg(test)]
pub(crate) fn tiny_model(n_elements: usize, n_time: usize, n_z: usize, n_x: usize) -> MeasurementModel {
    let mut geometry = ArrayGeometry::default();
    geometry.n_elements = n_elements;
    geometry.element_x = (0..n_elements).map(|i| (i as f64 + 0.5) * 1.0e-3).collect();
    let grid = PixelGrid {
        n_z,
        n_x,
        d_z: 0.2e-3,
        d_x: 0.2e-3,
        origin_x: 0.0,
        origin_z: 0.0,
    };
    let fgrid = FrequencyGrid::one_sided(n_time, geometry.f_s).unwrap();
    MeasurementModel::build(geometry, grid, fgrid).unwrap()
}
