//! Sampled 1D signals and 2D fields on uniform grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted signal length and field side.
pub const MIN_SAMPLES: usize = 3;

/// A real-valued function sampled at equidistant nodes.
///
/// `domain` records the interval the samples were taken from. Generators in
/// [`crate::signals`] sample the closed interval, so `b - a == h * (len - 1)`
/// for them; the filters only look at `values` and `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal1D {
    pub values: Vec<f64>,
    pub h: f64,
    pub domain: (f64, f64),
}

impl Signal1D {
    /// Unit-less signal starting at 0 with spacing `h`.
    pub fn new(values: Vec<f64>, h: f64) -> Result<Self> {
        let b = h * values.len().saturating_sub(1) as f64;
        Self::with_domain(values, h, (0.0, b))
    }

    pub fn with_domain(values: Vec<f64>, h: f64, domain: (f64, f64)) -> Result<Self> {
        if values.len() < MIN_SAMPLES {
            return Err(Error::InvalidSize(format!(
                "signal has {} samples, need at least {MIN_SAMPLES}",
                values.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::params(format!("grid spacing must be positive, got {h}")));
        }
        if !(domain.0.is_finite() && domain.1.is_finite() && domain.1 >= domain.0) {
            return Err(Error::params(format!("bad domain {domain:?}")));
        }
        Ok(Self { values, h, domain })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same grid, new values.
    pub fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, h: self.h, domain: self.domain }
    }

    pub(crate) fn check_compatible(&self, other: &Signal1D) -> Result<()> {
        Error::check_len(self.len(), other.len())?;
        if self.h != other.h {
            return Err(Error::SpacingMismatch(self.h, other.h));
        }
        Ok(())
    }
}

/// A real-valued function sampled on a rectangular grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub h: f64,
}

impl Field2D {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize, h: f64) -> Result<Self> {
        if rows < MIN_SAMPLES || cols < MIN_SAMPLES {
            return Err(Error::InvalidSize(format!(
                "field is {rows}x{cols}, need at least {MIN_SAMPLES}x{MIN_SAMPLES}"
            )));
        }
        Error::check_len(rows * cols, values.len())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::params(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Self { values, rows, cols, h })
    }

    pub fn filled(rows: usize, cols: usize, h: f64, value: f64) -> Result<Self> {
        Self::new(vec![value; rows * cols], rows, cols, h)
    }

    pub fn from_fn(rows: usize, cols: usize, h: f64, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(values, rows, cols, h)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, rows: self.rows, cols: self.cols, h: self.h }
    }

    /// Rotate by 90 degrees counter-clockwise: `out[i][j] = self[j][cols-1-i]`.
    pub fn rot90(&self) -> Self {
        let (r, c) = (self.cols, self.rows);
        let mut values = Vec::with_capacity(self.len());
        for i in 0..r {
            for j in 0..c {
                values.push(self.get(j, self.cols - 1 - i));
            }
        }
        Self { values, rows: r, cols: c, h: self.h }
    }

    /// Mirror left-right.
    pub fn flip_cols(&self) -> Self {
        Self::from_fn(self.rows, self.cols, self.h, |i, j| self.get(i, self.cols - 1 - j))
            .expect("same shape")
    }

    /// Mirror top-bottom.
    pub fn flip_rows(&self) -> Self {
        Self::from_fn(self.rows, self.cols, self.h, |i, j| self.get(self.rows - 1 - i, j))
            .expect("same shape")
    }

    pub(crate) fn check_compatible(&self, other: &Field2D) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        if self.h != other.h {
            return Err(Error::SpacingMismatch(self.h, other.h));
        }
        Ok(())
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn diff_norm2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
