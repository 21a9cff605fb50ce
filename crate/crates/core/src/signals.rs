//! Test signals, reproducible Gaussian noise and restoration metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{diff_norm2, norm2, Field2D, Signal1D};
use crate::grid_ops::{laplacian_2d, Stencil2DKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub delta_rel: f64,
}

/// `sin(2 pi x)` at `x_i = i / n`, `i = 0..=n`.
pub fn sample_f_sine(n: usize) -> Result<Signal1D> {
    if n < 4 {
        return Err(Error::InvalidSize(format!("need n >= 4, got {n}")));
    }
    let values = (0..=n).map(|i| (2.0 * PI * (i as f64 / n as f64)).sin()).collect();
    Signal1D::with_domain(values, 1.0 / n as f64, (0.0, 1.0))
}

/// `sign(0) = 0`, unlike `f64::signum`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn g_jumps(x: f64) -> f64 {
    (2.0 * PI * x).sin() + sign(x - 0.2) - sign(x - 0.4) + sign(x - 0.6) - sign(x - 0.8)
}

/// Sine plus four unit-height jumps at 0.2, 0.4, 0.6 and 0.8.
pub fn sample_g_jumps(n: usize) -> Result<Signal1D> {
    if n < 10 {
        return Err(Error::InvalidSize(format!("need n >= 10, got {n}")));
    }
    let values = (0..=n).map(|i| g_jumps(i as f64 / n as f64)).collect();
    Signal1D::with_domain(values, 1.0 / n as f64, (0.0, 1.0))
}

/// Node `k` of `n` equispaced nodes on `[-1, 1]`.
pub fn node_2d(k: usize, n: usize) -> f64 {
    -1.0 + 2.0 * k as f64 / (n - 1) as f64
}

/// `x sin(pi y)` on `[-1, 1]^2`, row `i` at `x_i`, column `j` at `y_j`.
pub fn sample_f2d(n: usize) -> Result<Field2D> {
    if n < 4 {
        return Err(Error::InvalidSize(format!("need n >= 4, got {n}")));
    }
    Field2D::from_fn(n, n, 2.0 / (n - 1) as f64, |i, j| node_2d(i, n) * (PI * node_2d(j, n)).sin())
}

/// SplitMix64 finalizer applied to `seed + counter * golden`, making draw `k`
/// a pure function of `(seed, k)`.
#[inline]
fn counter_u64(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1) with 53 random bits.
#[inline]
fn counter_unit(seed: u64, counter: u64) -> f64 {
    ((counter_u64(seed, counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal draws. Pair `m` uses uniforms `2m` and `2m + 1` through
/// the Box-Muller transform; its cosine branch is draw `2m`, its sine branch
/// draw `2m + 1`.
pub fn gaussian_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    for m in 0..len.div_ceil(2) as u64 {
        let u1 = counter_unit(seed, 2 * m);
        let u2 = counter_unit(seed, 2 * m + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        out.push(r * c);
        out.push(r * s);
    }
    out.truncate(len);
    out
}

fn calibrated(clean: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    if !(spec.delta_rel >= 0.0 && spec.delta_rel.is_finite()) {
        return Err(Error::params(format!("delta_rel must be finite and >= 0, got {}", spec.delta_rel)));
    }
    if spec.delta_rel == 0.0 {
        return Ok(clean.to_vec());
    }
    let clean_norm = norm2(clean);
    if clean_norm == 0.0 {
        return Err(Error::DegenerateInput("clean data has zero norm".into()));
    }
    let noise = gaussian_noise(clean.len(), spec.seed);
    let scale = spec.delta_rel * clean_norm / norm2(&noise);
    Ok(clean.iter().zip(&noise).map(|(c, e)| c + scale * e).collect())
}

/// Data that can be perturbed and measured.
pub trait Sampled: Clone {
    fn samples(&self) -> &[f64];
    fn with_samples(&self, values: Vec<f64>) -> Self;
    fn same_shape(&self, other: &Self) -> bool;
    /// Fraction of first differences with magnitude below `tau`.
    fn plateau_fraction(&self, tau: f64) -> f64;
    /// Sum of absolute second differences (1D) or five-point Laplacians (2D)
    /// over nodes with a full stencil.
    fn curvature_mass(&self) -> f64;
    /// Mean absolute first difference.
    fn mean_abs_diff(&self) -> f64;
}

fn first_diffs_1d(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
    v.windows(2).map(|w| w[1] - w[0])
}

impl Sampled for Signal1D {
    fn samples(&self) -> &[f64] {
        &self.values
    }

    fn with_samples(&self, values: Vec<f64>) -> Self {
        self.like(values)
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }

    fn plateau_fraction(&self, tau: f64) -> f64 {
        let n = self.len() - 1;
        first_diffs_1d(&self.values).filter(|d| d.abs() < tau).count() as f64 / n as f64
    }

    fn curvature_mass(&self) -> f64 {
        self.values.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).sum()
    }

    fn mean_abs_diff(&self) -> f64 {
        first_diffs_1d(&self.values).map(f64::abs).sum::<f64>() / (self.len() - 1) as f64
    }
}

impl Field2D {
    fn first_diffs(&self) -> impl Iterator<Item = f64> + '_ {
        let horizontal = (0..self.rows)
            .flat_map(move |i| (0..self.cols - 1).map(move |j| self.get(i, j + 1) - self.get(i, j)));
        let vertical = (0..self.rows - 1)
            .flat_map(move |i| (0..self.cols).map(move |j| self.get(i + 1, j) - self.get(i, j)));
        horizontal.chain(vertical)
    }

    fn diff_count(&self) -> usize {
        self.rows * (self.cols - 1) + (self.rows - 1) * self.cols
    }
}

impl Sampled for Field2D {
    fn samples(&self) -> &[f64] {
        &self.values
    }

    fn with_samples(&self, values: Vec<f64>) -> Self {
        self.like(values)
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn plateau_fraction(&self, tau: f64) -> f64 {
        self.first_diffs().filter(|d| d.abs() < tau).count() as f64 / self.diff_count() as f64
    }

    fn curvature_mass(&self) -> f64 {
        // unit spacing so the mass is comparable with the 1D second differences
        let unit = Field2D { h: 1.0, ..self.clone() };
        let lap = laplacian_2d(&unit, Stencil2DKind::NeumannMirror).expect("valid field");
        let mut total = 0.0;
        for i in 1..self.rows - 1 {
            for j in 1..self.cols - 1 {
                total += lap.get(i, j).abs();
            }
        }
        total
    }

    fn mean_abs_diff(&self) -> f64 {
        self.first_diffs().map(f64::abs).sum::<f64>() / self.diff_count() as f64
    }
}

/// `clean + delta_rel * ||clean|| * e / ||e||` with `e` from [`gaussian_noise`],
/// so that `||noisy - clean|| / ||clean|| == delta_rel`.
pub fn add_noise<T: Sampled>(clean: &T, spec: &NoiseSpec) -> Result<T> {
    Ok(clean.with_samples(calibrated(clean.samples(), spec)?))
}

/// Default plateau threshold: a tenth of the clean data's mean absolute
/// first difference.
pub fn default_tau<T: Sampled>(clean: &T) -> f64 {
    0.1 * clean.mean_abs_diff()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rel_err: f64,
    pub rmse: f64,
    /// `None` when the reference has zero range or the error is zero.
    pub psnr_db: Option<f64>,
    pub plateau_fraction: f64,
    pub curvature_mass: f64,
}

pub fn compute_metrics<T: Sampled>(u: &T, reference: &T, tau: f64) -> Result<Metrics> {
    if !u.same_shape(reference) {
        return Err(Error::DimensionMismatch {
            expected: reference.samples().len(),
            actual: u.samples().len(),
        });
    }
    let (x, r) = (u.samples(), reference.samples());
    let ref_norm = norm2(r);
    if ref_norm == 0.0 {
        return Err(Error::DegenerateInput("reference has zero norm".into()));
    }
    let err = diff_norm2(x, r);
    let rmse = err / (r.len() as f64).sqrt();
    let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let psnr_db = (range > 0.0 && rmse > 0.0).then(|| 20.0 * (range / rmse).log10());
    Ok(Metrics {
        rel_err: err / ref_norm,
        rmse,
        psnr_db,
        plateau_fraction: u.plateau_fraction(tau),
        curvature_mass: u.curvature_mass(),
    })
}
