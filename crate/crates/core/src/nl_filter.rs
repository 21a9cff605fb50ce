//! Fourth-order nonlinear Laplacian filter.
//!
//! The restored signal is the equilibrium of
//!
//! ```text
//! du/dt = -L_out( F(L_in u) ) - lambda (u - u0),    F(w) = w / (w^2 + eps)^p
//! ```
//!
//! where `L_in` is a second-derivative operator with zero-slope closure and
//! `L_out` one that vanishes at the boundary (`D0` and `D1` in 1D, the
//! five-point Laplacian with mirror and zero ghosts in 2D). For large
//! curvature the flux saturates, so kinks and jumps survive while flat and
//! linear pieces are left alone. Reconstructions come out piecewise linear
//! instead of piecewise constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{self, Explicit, Regularizer, Settings, Stepper};
use crate::grid::{Field2D, Signal1D};
use crate::grid_ops::{build_d0, build_d1, laplacian_2d_into, BandedLu, BandedMatrix, Stencil2DKind};

pub use crate::evolve::{LambdaRule, RunTrace, TimeStep};

/// Fraction of the linearized stability bound used by explicit Euler.
pub const EXPLICIT_SAFETY: f64 = 0.9;

/// Auto step of the semi-implicit scheme, in units of the explicit bound.
pub const SEMI_IMPLICIT_DT_FACTOR: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    ExplicitEuler,
    /// Convexity splitting: the flux is linearized with its largest slope
    /// `eps^-p` and that linear fourth-order part is taken implicitly.
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub lambda: LambdaRule,
    pub epsilon: f64,
    pub p: f64,
    pub dt: TimeStep,
    pub max_iters: usize,
    /// Stop once `||u_{n+1} - u_n|| / dt <= tol * ||u0||`.
    pub tol: f64,
    pub solver: Solver,
    /// Row-parallelism of the 2D stencils. Results do not depend on it.
    pub threads: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lambda: LambdaRule::Fixed(1.0),
            epsilon: 1e-2,
            p: 0.5,
            dt: TimeStep::Auto,
            max_iters: 200_000,
            tol: 1e-6,
            solver: Solver::ExplicitEuler,
            threads: 1,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        self.lambda.validate()?;
        self.dt.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::params(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.p >= 0.5 && self.p.is_finite()) {
            return Err(Error::params(format!("p must be >= 0.5, got {}", self.p)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::params(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Largest slope of the flux, reached at zero curvature.
    pub fn max_flux_slope(&self) -> f64 {
        self.epsilon.powf(-self.p)
    }
}

/// `w / (w^2 + eps)^p`.
#[inline]
pub fn flux(w: f64, epsilon: f64, p: f64) -> f64 {
    w / (w * w + epsilon).powf(p)
}

/// Antiderivative of [`flux`] vanishing at 0.
pub fn flux_potential(w: f64, epsilon: f64, p: f64) -> f64 {
    let s = w * w + epsilon;
    if (p - 1.0).abs() < 1e-12 {
        0.5 * (s / epsilon).ln()
    } else {
        (s.powf(1.0 - p) - epsilon.powf(1.0 - p)) / (2.0 * (1.0 - p))
    }
}

/// `sup |flux(w)|`: attained at `w^2 = eps / (2p - 1)` for `p > 0.5`, and the
/// limit 1 as `|w| -> inf` for `p = 0.5`.
pub fn flux_bound(epsilon: f64, p: f64) -> f64 {
    if p <= 0.5 {
        1.0
    } else {
        let w = (epsilon / (2.0 * p - 1.0)).sqrt();
        flux(w, epsilon, p)
    }
}

/// Linearized explicit-Euler bound `2 / (16 eps^-p / h^4 + lambda)` in 1D.
///
/// Uses `|flux'| <= eps^-p` and `||D1|| ||D0|| <= 16 / h^4`.
pub fn stable_step_bound(h: f64, epsilon: f64, p: f64, lambda: f64) -> f64 {
    2.0 / (16.0 * epsilon.powf(-p) / h.powi(4) + lambda)
}

/// 2D analogue: each five-point Laplacian has norm at most `8 / h^2`.
pub fn stable_step_bound_2d(h: f64, epsilon: f64, p: f64, lambda: f64) -> f64 {
    2.0 / (64.0 * epsilon.powf(-p) / h.powi(4) + lambda)
}

struct Nl1d {
    d0: BandedMatrix,
    d1: BandedMatrix,
    epsilon: f64,
    p: f64,
    h: f64,
}

impl Nl1d {
    fn new(n: usize, h: f64, params: &FilterParams) -> Result<Self> {
        Ok(Self {
            d0: build_d0(n, h)?,
            d1: build_d1(n, h)?,
            epsilon: params.epsilon,
            p: params.p,
            h,
        })
    }
}

impl Regularizer for Nl1d {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let mut w = vec![0.0; u.len()];
        self.d0.apply_into(u, &mut w);
        w.iter_mut().for_each(|x| *x = flux(*x, self.epsilon, self.p));
        self.d1.apply_into(&w, out);
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut w = vec![0.0; u.len()];
        self.d0.apply_into(u, &mut w);
        self.h * w.iter().map(|&x| flux_potential(x, self.epsilon, self.p)).sum::<f64>()
    }

    fn weight(&self) -> f64 {
        self.h
    }
}

struct Nl2d {
    rows: usize,
    cols: usize,
    h: f64,
    epsilon: f64,
    p: f64,
    threads: usize,
}

impl Nl2d {
    fn field(&self, u: &[f64]) -> Field2D {
        Field2D { values: u.to_vec(), rows: self.rows, cols: self.cols, h: self.h }
    }

    fn inner(&self, u: &[f64]) -> Field2D {
        let f = self.field(u);
        let mut w = vec![0.0; u.len()];
        laplacian_2d_into(&f, Stencil2DKind::NeumannMirror, self.threads, &mut w);
        f.like(w)
    }
}

impl Regularizer for Nl2d {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let mut w = self.inner(u);
        w.values.iter_mut().for_each(|x| *x = flux(*x, self.epsilon, self.p));
        laplacian_2d_into(&w, Stencil2DKind::DirichletZero, self.threads, out);
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let w = self.inner(u);
        self.h * self.h * w.values.iter().map(|&x| flux_potential(x, self.epsilon, self.p)).sum::<f64>()
    }

    fn weight(&self) -> f64 {
        self.h * self.h
    }
}

fn lambda_for_rhs(params: &FilterParams) -> f64 {
    params.lambda.initial()
}

/// `-D1 flux(D0 u) - lambda (u - u0)`.
///
/// With an adaptive lambda rule the starting estimate is used.
pub fn rhs_1d(u: &Signal1D, u0: &Signal1D, params: &FilterParams) -> Result<Vec<f64>> {
    u.check_compatible(u0)?;
    params.validate()?;
    let op = Nl1d::new(u.len(), u.h, params)?;
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    let lambda = lambda_for_rhs(params);
    Ok(neg_rhs(&a, &u.values, &u0.values, lambda))
}

/// `-Lap_D flux(Lap_N u) - lambda (u - u0)`.
pub fn rhs_2d(u: &Field2D, u0: &Field2D, params: &FilterParams) -> Result<Field2D> {
    u.check_compatible(u0)?;
    params.validate()?;
    let op = nl2d(u, params);
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(u.like(neg_rhs(&a, &u.values, &u0.values, lambda_for_rhs(params))))
}

fn neg_rhs(a: &[f64], u: &[f64], u0: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(u.iter().zip(u0)).map(|(a, (u, u0))| -a - lambda * (u - u0)).collect()
}

fn nl2d(u: &Field2D, params: &FilterParams) -> Nl2d {
    Nl2d {
        rows: u.rows,
        cols: u.cols,
        h: u.h,
        epsilon: params.epsilon,
        p: params.p,
        threads: params.threads.max(1),
    }
}

/// Samples on a 1D or 2D grid, for operations defined on both.
pub enum Grid<'a> {
    Line(&'a Signal1D),
    Plane(&'a Field2D),
}

impl<'a> From<&'a Signal1D> for Grid<'a> {
    fn from(s: &'a Signal1D) -> Self {
        Grid::Line(s)
    }
}

impl<'a> From<&'a Field2D> for Grid<'a> {
    fn from(f: &'a Field2D) -> Self {
        Grid::Plane(f)
    }
}

/// Fidelity weight that balances the regularizer against a known noise
/// level `delta` at the current iterate:
///
/// `lambda = max(0, -<u - u0, L_out F(L_in u)>_h / delta^2)`
///
/// where the inner product carries the `h` (1D) or `h^2` (2D) quadrature
/// weight, so `delta` is measured in the same weighted norm.
pub fn adaptive_lambda<'a>(u: impl Into<Grid<'a>>, u0: impl Into<Grid<'a>>, params: &FilterParams) -> Result<f64> {
    let LambdaRule::Adaptive { target_delta } = params.lambda else {
        return Err(Error::params("adaptive lambda needs a target delta"));
    };
    params.validate()?;
    match (u.into(), u0.into()) {
        (Grid::Line(u), Grid::Line(u0)) => {
            u.check_compatible(u0)?;
            let op = Nl1d::new(u.len(), u.h, params)?;
            let mut a = vec![0.0; u.len()];
            op.apply(&u.values, &mut a);
            Ok(evolve::adaptive_lambda_raw(&a, &u.values, &u0.values, op.weight(), target_delta))
        }
        (Grid::Plane(u), Grid::Plane(u0)) => {
            u.check_compatible(u0)?;
            let op = nl2d(u, params);
            let mut a = vec![0.0; u.len()];
            op.apply(&u.values, &mut a);
            Ok(evolve::adaptive_lambda_raw(&a, &u.values, &u0.values, op.weight(), target_delta))
        }
        _ => Err(Error::params("u and u0 must both be 1D or both 2D")),
    }
}

/// Convexity-splitting step: solve
/// `(I + dt c D1 D0 + dt lambda I) u_{n+1} = u_n - dt (D1 F(u_n) - c D1 D0 u_n) + dt lambda u0`.
struct SemiImplicit1d {
    // c D1 D0
    stiff: BandedMatrix,
    dt: f64,
    cached: Option<(f64, BandedLu)>,
}

impl SemiImplicit1d {
    fn factor(&mut self, lambda: f64) -> Result<&BandedLu> {
        let stale = self.cached.as_ref().is_none_or(|(l, _)| *l != lambda);
        if stale {
            let n = self.stiff.dim();
            let m = BandedMatrix::identity(n)?.combine(1.0 + self.dt * lambda, &self.stiff, self.dt)?;
            self.cached = Some((lambda, BandedLu::factor(&m)?));
        }
        Ok(&self.cached.as_ref().expect("factored above").1)
    }
}

impl Stepper for SemiImplicit1d {
    fn dt(&mut self, _lambda: f64) -> f64 {
        self.dt
    }

    /// Solved for the increment: subtracting `M u_n` from both sides leaves
    /// `M (u_{n+1} - u_n) = -dt (A(u_n) + lambda (u_n - u0))`, so equilibria
    /// are reproduced exactly.
    fn step(&mut self, u: &[f64], a: &[f64], u0: &[f64], lambda: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        let rhs: Vec<f64> = (0..u.len()).map(|i| -dt * (a[i] + lambda * (u[i] - u0[i]))).collect();
        let du = self.factor(lambda)?.solve(&rhs)?;
        for (o, (u, d)) in out.iter_mut().zip(u.iter().zip(&du)) {
            *o = u + d;
        }
        Ok(())
    }
}

fn settings(params: &FilterParams) -> Settings {
    Settings { lambda: params.lambda, max_iters: params.max_iters, tol: params.tol }
}

/// Evolve `u0` to equilibrium of the 1D filter.
pub fn denoise_1d(u0: &Signal1D, params: &FilterParams) -> Result<(Signal1D, RunTrace)> {
    params.validate()?;
    let (h, eps, p) = (u0.h, params.epsilon, params.p);
    let op = Nl1d::new(u0.len(), h, params)?;
    let init = u0.values.clone();
    let (u, trace) = match params.solver {
        Solver::ExplicitEuler => {
            let mut stepper = Explicit {
                dt_for: |lambda: f64| match params.dt {
                    TimeStep::Fixed(dt) => dt,
                    TimeStep::Auto => EXPLICIT_SAFETY * stable_step_bound(h, eps, p, lambda),
                },
            };
            evolve::evolve(&op, &mut stepper, &u0.values, init, &settings(params))?
        }
        Solver::SemiImplicit => {
            let c = params.max_flux_slope();
            let stiff = op.d1.matmul(&op.d0)?.scaled(c);
            let dt = match params.dt {
                TimeStep::Fixed(dt) => dt,
                TimeStep::Auto => {
                    SEMI_IMPLICIT_DT_FACTOR * stable_step_bound(h, eps, p, params.lambda.initial())
                }
            };
            let mut stepper = SemiImplicit1d { stiff, dt, cached: None };
            evolve::evolve(&op, &mut stepper, &u0.values, init, &settings(params))?
        }
    };
    Ok((u0.like(u), trace))
}

/// Evolve `u0` to equilibrium of the 2D filter with explicit Euler.
///
/// `warm_start`, when given, replaces `u0` as the initial state; the fidelity
/// term still pulls toward `u0`.
pub fn denoise_2d(u0: &Field2D, params: &FilterParams, warm_start: Option<&Field2D>) -> Result<(Field2D, RunTrace)> {
    params.validate()?;
    if params.solver != Solver::ExplicitEuler {
        return Err(Error::params("the 2D filter only supports explicit Euler"));
    }
    let init = match warm_start {
        Some(w) => {
            u0.check_compatible(w)?;
            w.values.clone()
        }
        None => u0.values.clone(),
    };
    let op = nl2d(u0, params);
    let (h, eps, p) = (u0.h, params.epsilon, params.p);
    let mut stepper = Explicit {
        dt_for: |lambda: f64| match params.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => EXPLICIT_SAFETY * stable_step_bound_2d(h, eps, p, lambda),
        },
    };
    let (u, trace) = evolve::evolve(&op, &mut stepper, &u0.values, init, &settings(params))?;
    Ok((u0.like(u), trace))
}

/// `||A(u) + lambda (u - u0)|| / ||lambda (u - u0)||` for the 1D filter.
pub fn stationary_residual_1d(u: &Signal1D, u0: &Signal1D, params: &FilterParams, lambda: f64) -> Result<f64> {
    u.check_compatible(u0)?;
    let op = Nl1d::new(u.len(), u.h, params)?;
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(evolve::relative_stationary_residual(&a, &u.values, &u0.values, lambda))
}

/// 2D counterpart of [`stationary_residual_1d`].
pub fn stationary_residual_2d(u: &Field2D, u0: &Field2D, params: &FilterParams, lambda: f64) -> Result<f64> {
    u.check_compatible(u0)?;
    let op = nl2d(u, params);
    let mut a = vec![0.0; u.len()];
    op.apply(&u.values, &mut a);
    Ok(evolve::relative_stationary_residual(&a, &u.values, &u0.values, lambda))
}
