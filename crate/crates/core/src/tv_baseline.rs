//! Total-variation (ROF) denoising by the regularized curvature flow
//! `u_t = div(grad u / |grad u|_beta) - lambda (u - u0)`,
//! `|x|_beta = sqrt(|x|^2 + beta)`.
//!
//! Fluxes live on cell faces between neighboring samples. Boundary faces
//! carry zero flux, which is the zero normal-derivative condition with ghost
//! samples mirrored about the boundary face.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{self, Explicit, Regularizer, Settings};
use crate::grid::{Field2D, Signal1D};
use crate::parallel;

pub use crate::evolve::{LambdaRule, RunTrace, TimeStep};

pub const EXPLICIT_SAFETY: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvParams {
    pub lambda: f64,
    pub beta: f64,
    pub dt: TimeStep,
    pub max_iters: usize,
    pub tol: f64,
    pub threads: usize,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 1e-6,
            dt: TimeStep::Auto,
            max_iters: 200_000,
            tol: 1e-6,
            threads: 1,
        }
    }
}

impl TvParams {
    pub fn validate(&self) -> Result<()> {
        LambdaRule::Fixed(self.lambda).validate()?;
        self.dt.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::params(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::params(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings { lambda: LambdaRule::Fixed(self.lambda), max_iters: self.max_iters, tol: self.tol }
    }
}

/// Parabolic step bound `h^2 sqrt(beta) / 4` in 1D.
pub fn tv_step_bound(h: f64, beta: f64) -> f64 {
    h * h * beta.sqrt() / 4.0
}

/// `h^2 sqrt(beta) / 8`: a 2D node has four faces instead of two.
pub fn tv_step_bound_2d(h: f64, beta: f64) -> f64 {
    h * h * beta.sqrt() / 8.0
}

/// Normalized face flux `d / sqrt(d^2 + t^2 + beta)`; its magnitude is below 1.
#[inline]
fn face_flux(d: f64, transverse_sq: f64, beta: f64) -> f64 {
    d / (d * d + transverse_sq + beta).sqrt()
}

struct Tv1d {
    h: f64,
    beta: f64,
}

impl Regularizer for Tv1d {
    /// `-div(u_x / |u_x|_beta)`.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let inv_h = 1.0 / self.h;
        let mut left = 0.0;
        for i in 0..n {
            let right = if i + 1 < n {
                face_flux((u[i + 1] - u[i]) * inv_h, 0.0, self.beta)
            } else {
                0.0
            };
            out[i] = -(right - left) * inv_h;
            left = right;
        }
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let inv_h = 1.0 / self.h;
        self.h * u.windows(2).map(|w| (((w[1] - w[0]) * inv_h).powi(2) + self.beta).sqrt()).sum::<f64>()
    }

    fn weight(&self) -> f64 {
        self.h
    }
}

struct Tv2d {
    rows: usize,
    cols: usize,
    h: f64,
    beta: f64,
    threads: usize,
}

impl Tv2d {
    /// Central differences along rows (`dx`, across columns) and along
    /// columns (`dy`, across rows), with one-sided halves at the edges.
    fn central(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (r, c) = (self.rows, self.cols);
        let s = 0.5 / self.h;
        let mut dx = vec![0.0; r * c];
        let mut dy = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let (jl, jr) = (j.saturating_sub(1), (j + 1).min(c - 1));
                let (iu, id) = (i.saturating_sub(1), (i + 1).min(r - 1));
                dx[i * c + j] = (u[i * c + jr] - u[i * c + jl]) * s;
                dy[i * c + j] = (u[id * c + j] - u[iu * c + j]) * s;
            }
        }
        (dx, dy)
    }

    /// Face fluxes: `fx[i][j]` between `(i, j)` and `(i, j+1)`, `fy[i][j]`
    /// between `(i, j)` and `(i+1, j)`.
    fn fluxes(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (r, c) = (self.rows, self.cols);
        let inv_h = 1.0 / self.h;
        let (dx, dy) = self.central(u);
        let mut fx = vec![0.0; r * (c - 1)];
        for i in 0..r {
            for j in 0..c - 1 {
                let d = (u[i * c + j + 1] - u[i * c + j]) * inv_h;
                let t = 0.5 * (dy[i * c + j] + dy[i * c + j + 1]);
                fx[i * (c - 1) + j] = face_flux(d, t * t, self.beta);
            }
        }
        let mut fy = vec![0.0; (r - 1) * c];
        for i in 0..r - 1 {
            for j in 0..c {
                let d = (u[(i + 1) * c + j] - u[i * c + j]) * inv_h;
                let t = 0.5 * (dx[i * c + j] + dx[(i + 1) * c + j]);
                fy[i * c + j] = face_flux(d, t * t, self.beta);
            }
        }
        (fx, fy)
    }
}

impl Regularizer for Tv2d {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (r, c) = (self.rows, self.cols);
        let inv_h = 1.0 / self.h;
        let (fx, fy) = self.fluxes(u);
        parallel::for_each_row(out, c, self.threads, |i, row| {
            for (j, o) in row.iter_mut().enumerate() {
                let east = if j + 1 < c { fx[i * (c - 1) + j] } else { 0.0 };
                let west = if j > 0 { fx[i * (c - 1) + j - 1] } else { 0.0 };
                let south = if i + 1 < r { fy[i * c + j] } else { 0.0 };
                let north = if i > 0 { fy[(i - 1) * c + j] } else { 0.0 };
                *o = -((east - west) + (south - north)) * inv_h;
            }
        });
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let (dx, dy) = self.central(u);
        self.h * self.h * dx.iter().zip(&dy).map(|(a, b)| (a * a + b * b + self.beta).sqrt()).sum::<f64>()
    }

    fn weight(&self) -> f64 {
        self.h * self.h
    }
}

fn tv2d(u: &Field2D, params: &TvParams) -> Tv2d {
    Tv2d { rows: u.rows, cols: u.cols, h: u.h, beta: params.beta, threads: params.threads.max(1) }
}

/// `div(u_x / |u_x|_beta) - lambda (u - u0)`.
pub fn tv_rhs_1d(u: &Signal1D, u0: &Signal1D, params: &TvParams) -> Result<Vec<f64>> {
    u.check_compatible(u0)?;
    params.validate()?;
    let op = Tv1d { h: u.h, beta: params.beta };
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok((0..u.len()).map(|i| -a[i] - params.lambda * (u.values[i] - u0.values[i])).collect())
}

pub fn tv_rhs_2d(u: &Field2D, u0: &Field2D, params: &TvParams) -> Result<Field2D> {
    u.check_compatible(u0)?;
    params.validate()?;
    let op = tv2d(u, params);
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(u.like((0..u.len()).map(|i| -a[i] - params.lambda * (u.values[i] - u0.values[i])).collect()))
}

/// Largest face-flux magnitude of `u`; always below 1.
pub fn max_face_flux_2d(u: &Field2D, params: &TvParams) -> f64 {
    let (fx, fy) = tv2d(u, params).fluxes(&u.values);
    fx.iter().chain(&fy).fold(0.0, |m, f| m.max(f.abs()))
}

pub fn tv_denoise_1d(u0: &Signal1D, params: &TvParams) -> Result<(Signal1D, RunTrace)> {
    params.validate()?;
    let op = Tv1d { h: u0.h, beta: params.beta };
    let bound = tv_step_bound(u0.h, params.beta);
    let mut stepper = Explicit {
        dt_for: |_| match params.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => EXPLICIT_SAFETY * bound,
        },
    };
    let (u, trace) = evolve::evolve(&op, &mut stepper, &u0.values, u0.values.clone(), &params.settings())?;
    Ok((u0.like(u), trace))
}

pub fn tv_denoise_2d(u0: &Field2D, params: &TvParams) -> Result<(Field2D, RunTrace)> {
    params.validate()?;
    let op = tv2d(u0, params);
    let bound = tv_step_bound_2d(u0.h, params.beta);
    let mut stepper = Explicit {
        dt_for: |_| match params.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => EXPLICIT_SAFETY * bound,
        },
    };
    let (u, trace) = evolve::evolve(&op, &mut stepper, &u0.values, u0.values.clone(), &params.settings())?;
    Ok((u0.like(u), trace))
}

/// `||A(u) + lambda (u - u0)|| / ||lambda (u - u0)||` for 1D TV.
pub fn tv_stationary_residual_1d(u: &Signal1D, u0: &Signal1D, params: &TvParams) -> Result<f64> {
    u.check_compatible(u0)?;
    let op = Tv1d { h: u.h, beta: params.beta };
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(evolve::relative_stationary_residual(&a, &u.values, &u0.values, params.lambda))
}

pub fn tv_stationary_residual_2d(u: &Field2D, u0: &Field2D, params: &TvParams) -> Result<f64> {
    u.check_compatible(u0)?;
    let op = tv2d(u, params);
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(evolve::relative_stationary_residual(&a, &u.values, &u0.values, params.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{add_noise, compute_metrics, sample_f_sine, NoiseSpec};
    use proptest::prelude::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn max_abs(a: &[f64]) -> f64 {
        a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn random_field(n: usize, seed: &mut u64) -> Field2D {
        Field2D::from_fn(n, n, 1.0, |_, _| lcg(seed)).unwrap()
    }

    /// Mirror-ghost oracle: pad with `u[-1] = u[0]`, `u[n] = u[n-1]` so the
    /// boundary face differences vanish.
    fn oracle_1d(u: &[f64], u0: &[f64], h: f64, beta: f64, lambda: f64) -> Vec<f64> {
        let n = u.len();
        let mut padded = vec![u[0]];
        padded.extend_from_slice(u);
        padded.push(u[n - 1]);
        let phi = |d: f64| d / (d * d + beta).sqrt();
        (0..n)
            .map(|i| {
                let right = phi((padded[i + 2] - padded[i + 1]) / h);
                let left = phi((padded[i + 1] - padded[i]) / h);
                (right - left) / h - lambda * (u[i] - u0[i])
            })
            .collect()
    }

    /// 2D oracle on a half-sample mirror padding. Transverse derivatives on
    /// a face average the central differences of the two adjacent nodes,
    /// with one-sided halves on the boundary.
    fn oracle_2d(u: &Field2D, beta: f64) -> Vec<f64> {
        let (r, c) = (u.rows as isize, u.cols as isize);
        let at = |i: isize, j: isize| u.get(i.clamp(0, r - 1) as usize, j.clamp(0, c - 1) as usize);
        let cx = |i: isize, j: isize| (at(i, (j + 1).min(c - 1)) - at(i, (j - 1).max(0))) / 2.0;
        let cy = |i: isize, j: isize| (at((i + 1).min(r - 1), j) - at((i - 1).max(0), j)) / 2.0;
        let east = |i: isize, j: isize| -> f64 {
            if j + 1 >= c || j < 0 {
                return 0.0;
            }
            let d = at(i, j + 1) - at(i, j);
            let t = 0.5 * (cy(i, j) + cy(i, j + 1));
            d / (d * d + t * t + beta).sqrt()
        };
        let south = |i: isize, j: isize| -> f64 {
            if i + 1 >= r || i < 0 {
                return 0.0;
            }
            let d = at(i + 1, j) - at(i, j);
            let t = 0.5 * (cx(i, j) + cx(i + 1, j));
            d / (d * d + t * t + beta).sqrt()
        };
        let mut out = Vec::new();
        for i in 0..r {
            for j in 0..c {
                out.push(east(i, j) - east(i, j - 1) + south(i, j) - south(i - 1, j));
            }
        }
        out
    }

    #[test]
    fn rhs_1d_matches_mirror_oracle() {
        let mut seed = 5;
        for &h in &[1.0, 0.1] {
            let params = TvParams { lambda: 0.8, beta: 1e-3, ..Default::default() };
            for _ in 0..20 {
                let u: Vec<f64> = (0..8).map(|_| lcg(&mut seed)).collect();
                let u0: Vec<f64> = (0..8).map(|_| lcg(&mut seed)).collect();
                let expected = oracle_1d(&u, &u0, h, 1e-3, 0.8);
                let got = tv_rhs_1d(
                    &Signal1D::new(u, h).unwrap(),
                    &Signal1D::new(u0, h).unwrap(),
                    &params,
                )
                .unwrap();
                assert!(max_abs_diff(&got, &expected) <= 1e-12 * max_abs(&expected));
            }
        }
    }

    #[test]
    fn ramp_has_zero_interior_divergence() {
        let u = Signal1D::new((0..12).map(|i| 0.3 * i as f64 - 1.0).collect(), 1.0).unwrap();
        let params = TvParams { lambda: 0.0, ..Default::default() };
        let r = tv_rhs_1d(&u, &u, &params).unwrap();
        for v in &r[2..10] {
            assert!(v.abs() < 1e-15);
        }
        assert!(r[0] > 0.0 && r[11] < 0.0);
    }

    #[test]
    fn rhs_2d_matches_oracle() {
        let mut seed = 6;
        let params = TvParams { lambda: 0.0, beta: 1e-2, ..Default::default() };
        for _ in 0..20 {
            let u = random_field(5, &mut seed);
            let expected = oracle_2d(&u, 1e-2);
            let got = tv_rhs_2d(&u, &u, &params).unwrap();
            assert!(max_abs_diff(&got.values, &expected) <= 1e-12 * max_abs(&expected));
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let params = TvParams::default();
        let s = Signal1D::new(vec![-0.4; 15], 1.0).unwrap();
        assert!(tv_rhs_1d(&s, &s, &params).unwrap().iter().all(|&v| v == 0.0));
        let (u, trace) = tv_denoise_1d(&s, &params).unwrap();
        assert_eq!(u, s);
        assert_eq!(trace.iters_run, 1);
        assert!(trace.converged);

        let f = Field2D::filled(6, 6, 1.0, 0.2).unwrap();
        assert!(tv_rhs_2d(&f, &f, &params).unwrap().values.iter().all(|&v| v == 0.0));
        let (u, trace) = tv_denoise_2d(&f, &params).unwrap();
        assert_eq!(u, f);
        assert!(trace.converged);
    }

    #[test]
    fn rhs_2d_rotation_and_flips() {
        let mut seed = 7;
        let params = TvParams { lambda: 0.5, beta: 1e-4, ..Default::default() };
        for _ in 0..10 {
            let u = random_field(6, &mut seed);
            let u0 = random_field(6, &mut seed);
            let base = tv_rhs_2d(&u, &u0, &params).unwrap();
            let tol = 1e-12 * max_abs(&base.values);
            let rot = tv_rhs_2d(&u.rot90(), &u0.rot90(), &params).unwrap();
            assert!(max_abs_diff(&rot.values, &base.rot90().values) <= tol);
            let fc = tv_rhs_2d(&u.flip_cols(), &u0.flip_cols(), &params).unwrap();
            assert!(max_abs_diff(&fc.values, &base.flip_cols().values) <= tol);
            let fr = tv_rhs_2d(&u.flip_rows(), &u0.flip_rows(), &params).unwrap();
            assert!(max_abs_diff(&fr.values, &base.flip_rows().values) <= tol);
        }
    }

    proptest! {
        #[test]
        fn rhs_1d_negation_shift_and_mirror(
            xs in proptest::collection::vec(-3.0f64..3.0, 6..30),
            c in -5.0f64..5.0,
        ) {
            let n = xs.len() / 2;
            let u = Signal1D::new(xs[..n].to_vec(), 1.0).unwrap();
            let u0 = Signal1D::new(xs[n..2 * n].to_vec(), 1.0).unwrap();
            let params = TvParams { lambda: 0.4, beta: 1e-3, ..Default::default() };
            let base = tv_rhs_1d(&u, &u0, &params).unwrap();
            let tol = 1e-10 * (1.0 + max_abs(&base));

            let neg = |s: &Signal1D| s.like(s.values.iter().map(|v| -v).collect());
            let got = tv_rhs_1d(&neg(&u), &neg(&u0), &params).unwrap();
            prop_assert_eq!(got, base.iter().map(|v| -v).collect::<Vec<_>>());

            let shift = |s: &Signal1D| s.like(s.values.iter().map(|v| v + c).collect());
            let got = tv_rhs_1d(&shift(&u), &shift(&u0), &params).unwrap();
            prop_assert!(max_abs_diff(&got, &base) <= tol);

            let rev = |s: &Signal1D| s.like(s.values.iter().rev().copied().collect());
            let got = tv_rhs_1d(&rev(&u), &rev(&u0), &params).unwrap();
            let expected: Vec<f64> = base.iter().rev().copied().collect();
            prop_assert!(max_abs_diff(&got, &expected) <= tol);
        }

        #[test]
        fn face_flux_below_one(vals in proptest::collection::vec(-1e3f64..1e3, 16)) {
            let f = Field2D::new(vals, 4, 4, 1.0).unwrap();
            prop_assert!(max_face_flux_2d(&f, &TvParams::default()) < 1.0);
        }
    }

    #[test]
    fn step_bounds() {
        assert_eq!(tv_step_bound(2.0, 1e-6), 1e-3);
        assert_eq!(tv_step_bound_2d(2.0, 1e-6), 5e-4);
    }

    #[test]
    fn noisy_sine_improves_and_certifies() {
        let clean = sample_f_sine(100).unwrap();
        let noisy = add_noise(&clean, &NoiseSpec { seed: 1, delta_rel: 0.09 }).unwrap();
        let clean = Signal1D::new(clean.values, 1.0).unwrap();
        let noisy = Signal1D::new(noisy.values, 1.0).unwrap();
        let params = TvParams { lambda: 10.0, ..Default::default() };
        let (u, trace) = tv_denoise_1d(&noisy, &params).unwrap();
        assert!(trace.converged);
        assert!(compute_metrics(&u, &clean, 0.01).unwrap().rel_err < 0.09);
        assert!(tv_stationary_residual_1d(&u, &noisy, &params).unwrap() <= 10.0 * params.tol);
    }

    #[test]
    fn denoise_2d_negation_and_threads() {
        let mut seed = 8;
        let u0 = random_field(10, &mut seed);
        let params = TvParams { lambda: 30.0, beta: 1e-2, max_iters: 300, ..Default::default() };
        let (a, _) = tv_denoise_2d(&u0, &params).unwrap();
        let neg = u0.like(u0.values.iter().map(|v| -v).collect());
        let (b, _) = tv_denoise_2d(&neg, &params).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| *x == -y));
        let (c, _) = tv_denoise_2d(&u0, &TvParams { threads: 3, ..params.clone() }).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn params_validation() {
        assert!(TvParams { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(TvParams { lambda: f64::INFINITY, ..Default::default() }.validate().is_err());
        assert!(TvParams { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(TvParams::default().validate().is_ok());
    }
}
