//! Discrete differential operators and a banded linear solver.
//!
//! The 1D second-derivative matrices act on the interior node values
//! `u(x_1), ..., u(x_{N-1})`:
//!
//! * `D0` closes the centered stencil with `u(x_0) = u(x_1)` and
//!   `u(x_N) = u(x_{N-1})` (zero slope), giving boundary rows `(-1, 1)` and
//!   `(1, -1)`.
//! * `D1` closes it with zero ghost values (the flux variable vanishes at the
//!   ends), giving boundary rows `(-2, 1)` and `(1, -2)`.
//!
//! Both are symmetric and carry the `1/h^2` factor.
//!
//! 2D operators are applied matrix-free on [`Field2D`] values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field2D;
use crate::parallel;

/// One diagonal of a [`BandedMatrix`].
///
/// `values[k]` is the entry at `(k, k + offset)` for `offset >= 0` and at
/// `(k - offset, k)` for `offset < 0`, i.e. indexed by `min(row, col)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub offset: isize,
    pub values: Vec<f64>,
}

/// Square matrix stored by diagonals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandedMatrix {
    n: usize,
    bands: Vec<Band>,
    spacing_scale: f64,
}

impl BandedMatrix {
    /// Build from explicit diagonals. Offsets must be distinct and each band
    /// must hold `n - |offset|` values.
    pub fn new(n: usize, mut bands: Vec<Band>, spacing_scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("matrix dimension must be positive".into()));
        }
        bands.sort_by_key(|b| b.offset);
        for w in bands.windows(2) {
            if w[0].offset == w[1].offset {
                return Err(Error::params(format!("duplicate band offset {}", w[0].offset)));
            }
        }
        for b in &bands {
            let k = b.offset.unsigned_abs();
            if k >= n {
                return Err(Error::InvalidSize(format!("band offset {} outside {n}x{n}", b.offset)));
            }
            Error::check_len(n - k, b.values.len())?;
        }
        Ok(Self { n, bands, spacing_scale })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, vec![Band { offset: 0, values: vec![1.0; n] }], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// The `1/h^2`-type factor folded into the stored values.
    pub fn spacing_scale(&self) -> f64 {
        self.spacing_scale
    }

    /// Number of sub-diagonals and super-diagonals.
    pub fn bandwidths(&self) -> (usize, usize) {
        let lower = self.bands.iter().map(|b| (-b.offset).max(0) as usize).max().unwrap_or(0);
        let upper = self.bands.iter().map(|b| b.offset.max(0) as usize).max().unwrap_or(0);
        (lower, upper)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize;
        self.bands
            .iter()
            .find(|b| b.offset == off)
            .map_or(0.0, |b| b.values[i.min(j)])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for b in &self.bands {
            for (k, &v) in b.values.iter().enumerate() {
                let (i, j) = band_coords(b.offset, k);
                d[i][j] = v;
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.bands.iter().all(|b| {
            b.offset == 0
                || self
                    .bands
                    .iter()
                    .find(|o| o.offset == -b.offset)
                    .is_some_and(|o| o.values == b.values)
        })
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for b in &self.bands {
            let k = b.offset.unsigned_abs();
            if b.offset >= 0 {
                for (i, &v) in b.values.iter().enumerate() {
                    y[i] += v * x[i + k];
                }
            } else {
                for (j, &v) in b.values.iter().enumerate() {
                    y[j + k] += v * x[j];
                }
            }
        }
    }

    /// Matrix product `self * other`, still banded.
    pub fn matmul(&self, other: &BandedMatrix) -> Result<BandedMatrix> {
        Error::check_len(self.n, other.n)?;
        let n = self.n;
        let (la, ua) = self.bandwidths();
        let (lb, ub) = other.bandwidths();
        let (lo, hi) = (-((la + lb) as isize), (ua + ub) as isize);
        let mut bands: Vec<Band> = (lo..=hi)
            .filter(|o| o.unsigned_abs() < n)
            .map(|offset| Band { offset, values: vec![0.0; n - offset.unsigned_abs()] })
            .collect();
        for a in &self.bands {
            for (ka, &va) in a.values.iter().enumerate() {
                let (i, m) = band_coords(a.offset, ka);
                for b in &other.bands {
                    let j = m as isize + b.offset;
                    if j < 0 || j as usize >= n {
                        continue;
                    }
                    let j = j as usize;
                    let vb = b.values[m.min(j)];
                    let off = j as isize - i as isize;
                    bands[(off - lo) as usize].values[i.min(j)] += va * vb;
                }
            }
        }
        BandedMatrix::new(n, bands, self.spacing_scale * other.spacing_scale)
    }

    pub fn scaled(&self, s: f64) -> BandedMatrix {
        let bands = self
            .bands
            .iter()
            .map(|b| Band { offset: b.offset, values: b.values.iter().map(|v| s * v).collect() })
            .collect();
        Self { n: self.n, bands, spacing_scale: self.spacing_scale * s }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &BandedMatrix, beta: f64) -> Result<BandedMatrix> {
        Error::check_len(self.n, other.n)?;
        let mut bands: Vec<Band> = self
            .bands
            .iter()
            .map(|b| Band { offset: b.offset, values: b.values.iter().map(|v| alpha * v).collect() })
            .collect();
        for b in &other.bands {
            match bands.iter_mut().find(|x| x.offset == b.offset) {
                Some(x) => x.values.iter_mut().zip(&b.values).for_each(|(x, y)| *x += beta * y),
                None => bands.push(Band {
                    offset: b.offset,
                    values: b.values.iter().map(|v| beta * v).collect(),
                }),
            }
        }
        BandedMatrix::new(self.n, bands, 1.0)
    }
}

fn band_coords(offset: isize, k: usize) -> (usize, usize) {
    if offset >= 0 {
        (k, k + offset as usize)
    } else {
        (k + offset.unsigned_abs(), k)
    }
}

fn check_grid(n_interior: usize, h: f64) -> Result<f64> {
    if n_interior < 2 {
        return Err(Error::InvalidSize(format!("need at least 2 interior nodes, got {n_interior}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::params(format!("grid spacing must be positive, got {h}")));
    }
    Ok(1.0 / (h * h))
}

fn tridiag(n: usize, s: f64, first: f64, last: f64) -> Result<BandedMatrix> {
    let mut diag = vec![-2.0 * s; n];
    diag[0] = first * s;
    diag[n - 1] = last * s;
    let off = vec![s; n - 1];
    BandedMatrix::new(
        n,
        vec![
            Band { offset: -1, values: off.clone() },
            Band { offset: 0, values: diag },
            Band { offset: 1, values: off },
        ],
        s,
    )
}

/// Second-derivative matrix with zero-slope closure.
pub fn build_d0(n_interior: usize, h: f64) -> Result<BandedMatrix> {
    let s = check_grid(n_interior, h)?;
    tridiag(n_interior, s, -1.0, -1.0)
}

/// Second-derivative matrix with zero ghost values.
pub fn build_d1(n_interior: usize, h: f64) -> Result<BandedMatrix> {
    let s = check_grid(n_interior, h)?;
    tridiag(n_interior, s, -2.0, -2.0)
}

pub fn apply_banded(m: &BandedMatrix, x: &[f64]) -> Result<Vec<f64>> {
    m.apply(x)
}

/// LU factorization of a banded matrix with partial pivoting inside the band.
///
/// Row interchanges widen the upper band to `lower + upper`; each row starts
/// in a window of `2 * lower + upper + 1` columns and grows if fill reaches
/// past it.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    rows: Vec<PackedRow>,
    // multipliers[k][r] eliminates row k + 1 + r with pivot row k
    multipliers: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

#[derive(Clone, Debug)]
struct PackedRow {
    start: usize,
    vals: Vec<f64>,
}

impl PackedRow {
    #[inline]
    fn get(&self, col: usize) -> f64 {
        col.checked_sub(self.start).and_then(|k| self.vals.get(k)).copied().unwrap_or(0.0)
    }

    // Row interchanges can carry fill past the initial window.
    fn sub(&mut self, col: usize, delta: f64) {
        let k = col - self.start;
        if k >= self.vals.len() {
            self.vals.resize(k + 1, 0.0);
        }
        self.vals[k] -= delta;
    }

    fn end(&self) -> usize {
        self.start + self.vals.len()
    }
}

/// Pivots smaller than this relative to the largest entry are treated as zero.
const PIVOT_RTOL: f64 = 1e-14;

impl BandedLu {
    pub fn factor(m: &BandedMatrix) -> Result<Self> {
        let n = m.n;
        let (kl, ku) = m.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut rows: Vec<PackedRow> = (0..n)
            .map(|i| PackedRow { start: i.saturating_sub(kl), vals: vec![0.0; width] })
            .collect();
        let mut scale = 0.0_f64;
        for b in &m.bands {
            for (k, &v) in b.values.iter().enumerate() {
                let (i, j) = band_coords(b.offset, k);
                let row = &mut rows[i];
                row.vals[j - row.start] = v;
                scale = scale.max(v.abs());
            }
        }
        if scale == 0.0 {
            return Err(Error::Singular { row: 0, pivot: 0.0 });
        }

        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let p = (k..=last)
                .max_by(|&a, &b| rows[a].get(k).abs().total_cmp(&rows[b].get(k).abs()))
                .unwrap_or(k);
            rows.swap(k, p);
            pivots.push(p);
            let pivot = rows[k].get(k);
            if pivot.abs() <= PIVOT_RTOL * scale {
                return Err(Error::Singular { row: k, pivot });
            }
            let col_end = (k + kl + ku).min(n - 1);
            let mut mults = Vec::with_capacity(last - k);
            let (head, tail) = rows.split_at_mut(k + 1);
            let prow = &head[k];
            for row in tail.iter_mut().take(last - k) {
                let f = row.get(k) / pivot;
                mults.push(f);
                if f == 0.0 {
                    continue;
                }
                for c in k..=col_end {
                    let pv = prow.get(c);
                    if pv != 0.0 {
                        row.sub(c, f * pv);
                    }
                }
            }
            multipliers.push(mults);
        }
        Ok(Self { n, rows, multipliers, pivots })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.n, rhs.len())?;
        let n = self.n;
        let mut y = rhs.to_vec();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            for (r, &f) in self.multipliers[k].iter().enumerate() {
                y[k + 1 + r] -= f * yk;
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let row = &self.rows[k];
            let mut acc = y[k];
            for (c, xc) in x.iter().enumerate().take(row.end().min(n)).skip(k + 1) {
                acc -= row.get(c) * xc;
            }
            x[k] = acc / row.get(k);
        }
        Ok(x)
    }
}

/// Solve `M x = rhs` by banded LU with partial pivoting.
pub fn solve_banded(m: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(m.n, rhs.len())?;
    BandedLu::factor(m)?.solve(rhs)
}

/// Boundary closure for the five-point Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil2DKind {
    /// Ghost values mirror across the boundary node: `u[-1] = u[1]`.
    NeumannMirror,
    /// Ghost values are zero.
    DirichletZero,
}

/// Five-point Laplacian with the given boundary closure.
pub fn laplacian_2d(u: &Field2D, kind: Stencil2DKind) -> Result<Field2D> {
    let mut out = vec![0.0; u.len()];
    laplacian_2d_into(u, kind, 1, &mut out);
    Ok(u.like(out))
}

pub(crate) fn laplacian_2d_into(u: &Field2D, kind: Stencil2DKind, threads: usize, out: &mut [f64]) {
    let (rows, cols) = (u.rows, u.cols);
    let inv_h2 = 1.0 / (u.h * u.h);
    let v = &u.values;
    parallel::for_each_row(out, cols, threads, |i, row| {
        let up = neighbor(i, rows, -1);
        let down = neighbor(i, rows, 1);
        for (j, o) in row.iter_mut().enumerate() {
            let left = neighbor(j, cols, -1);
            let right = neighbor(j, cols, 1);
            let at = |n: Neighbor, other: usize, vertical: bool| -> f64 {
                let idx = |a: usize| if vertical { a * cols + other } else { other * cols + a };
                match (n, kind) {
                    (Neighbor::Inside(a), _) => v[idx(a)],
                    (Neighbor::Ghost(mirror), Stencil2DKind::NeumannMirror) => v[idx(mirror)],
                    (Neighbor::Ghost(_), Stencil2DKind::DirichletZero) => 0.0,
                }
            };
            let sum = at(up, j, true) + at(down, j, true) + at(left, i, false) + at(right, i, false);
            *o = (sum - 4.0 * v[i * cols + j]) * inv_h2;
        }
    });
}

#[derive(Clone, Copy)]
enum Neighbor {
    Inside(usize),
    // index of the mirrored interior node
    Ghost(usize),
}

#[inline]
fn neighbor(i: usize, n: usize, step: isize) -> Neighbor {
    let k = i as isize + step;
    if k < 0 {
        Neighbor::Ghost(1)
    } else if k as usize >= n {
        Neighbor::Ghost(n - 2)
    } else {
        Neighbor::Inside(k as usize)
    }
}
