//! Time stepping to equilibrium, shared by the nonlinear filter and the TV
//! baseline.
//!
//! Both methods evolve `du/dt = -A(u) - lambda * (u - u0)` where `A` is the
//! method's regularizing operator. The driver owns the stopping rule, the
//! adaptive fidelity weight and the diagnostics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{diff_norm2, norm2};

/// How the fidelity weight is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    /// Re-estimate lambda every step so that the equilibrium satisfies
    /// `||u - u0|| = target_delta`.
    Adaptive { target_delta: f64 },
}

impl LambdaRule {
    /// Starting estimate for the adaptive rule.
    pub const ADAPTIVE_START: f64 = 1.0;

    pub fn initial(&self) -> f64 {
        match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::Adaptive { .. } => Self::ADAPTIVE_START,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            LambdaRule::Fixed(l) if !(l >= 0.0 && l.is_finite()) => {
                Err(Error::params(format!("lambda must be finite and >= 0, got {l}")))
            }
            LambdaRule::Adaptive { target_delta: d } if !(d > 0.0 && d.is_finite()) => {
                Err(Error::params(format!("target delta must be positive, got {d}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

impl TimeStep {
    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::params(format!("dt must be positive, got {dt}")))
            }
            _ => Ok(()),
        }
    }
}

/// Per-step diagnostics of a denoising run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iters_run: usize,
    /// `||u_{n+1} - u_n|| / dt` per step.
    pub residual_history: Vec<f64>,
    /// Quadrature-weighted `||u_{n+1} - u0||` per step.
    pub fidelity_history: Vec<f64>,
    pub lambda_history: Vec<f64>,
    /// Discrete energy (regularizer plus fidelity) per step.
    pub energy_history: Vec<f64>,
    pub dt_used: f64,
    pub converged: bool,
    /// `||u0||`, the scale of the stopping rule.
    pub u0_norm: f64,
    pub wall_seconds: f64,
}

impl RunTrace {
    pub fn final_lambda(&self) -> Option<f64> {
        self.lambda_history.last().copied()
    }

    pub fn final_fidelity(&self) -> Option<f64> {
        self.fidelity_history.last().copied()
    }
}

/// Equilibrium certificate: `||A(u) + lambda (u - u0)|| <= 10 tol ||lambda (u - u0)||`.
pub const CERTIFICATE_FACTOR: f64 = 10.0;

/// `||A(u) + lambda (u - u0)|| / ||lambda (u - u0)||`, or 0 when both vanish.
pub fn relative_stationary_residual(a: &[f64], u: &[f64], u0: &[f64], lambda: f64) -> f64 {
    let num = a
        .iter()
        .zip(u.iter().zip(u0))
        .map(|(a, (u, u0))| {
            let r = a + lambda * (u - u0);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    let den = lambda * diff_norm2(u, u0);
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `max(0, -w <u - u0, A(u)> / delta^2)`.
pub(crate) fn adaptive_lambda_raw(a: &[f64], u: &[f64], u0: &[f64], weight: f64, delta: f64) -> f64 {
    let inner: f64 = a.iter().zip(u.iter().zip(u0)).map(|(a, (u, u0))| (u - u0) * a).sum();
    (-weight * inner / (delta * delta)).max(0.0)
}

/// The regularizing operator of one method on one grid.
pub(crate) trait Regularizer {
    /// `out = A(u)`.
    fn apply(&self, u: &[f64], out: &mut [f64]);
    /// Regularizer part of the discrete energy.
    fn energy(&self, u: &[f64]) -> f64;
    /// Quadrature weight of one sample (`h` in 1D, `h^2` in 2D).
    fn weight(&self) -> f64;
}

pub(crate) struct Settings {
    pub lambda: LambdaRule,
    pub max_iters: usize,
    pub tol: f64,
}

/// One time step: given `u_n`, `A(u_n)`, lambda and dt, write `u_{n+1}`.
pub(crate) trait Stepper {
    fn dt(&mut self, lambda: f64) -> f64;
    fn step(&mut self, u: &[f64], a: &[f64], u0: &[f64], lambda: f64, dt: f64, out: &mut [f64]) -> Result<()>;
}

/// Forward Euler.
pub(crate) struct Explicit<F: FnMut(f64) -> f64> {
    pub dt_for: F,
}

impl<F: FnMut(f64) -> f64> Stepper for Explicit<F> {
    fn dt(&mut self, lambda: f64) -> f64 {
        (self.dt_for)(lambda)
    }

    fn step(&mut self, u: &[f64], a: &[f64], u0: &[f64], lambda: f64, dt: f64, out: &mut [f64]) -> Result<()> {
        for (o, (u, (a, u0))) in out.iter_mut().zip(u.iter().zip(a.iter().zip(u0))) {
            *o = u - dt * (a + lambda * (u - u0));
        }
        Ok(())
    }
}

pub(crate) fn evolve<R: Regularizer, S: Stepper>(
    reg: &R,
    stepper: &mut S,
    u0: &[f64],
    init: Vec<f64>,
    settings: &Settings,
) -> Result<(Vec<f64>, RunTrace)> {
    let start = Instant::now();
    let n = u0.len();
    let weight = reg.weight();
    let u0_norm = norm2(u0);
    let mut trace = RunTrace { u0_norm, ..Default::default() };

    let mut u = init;
    let mut a = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut a_next = vec![0.0; n];
    reg.apply(&u, &mut a);
    let mut lambda = settings.lambda.initial();
    if let LambdaRule::Adaptive { target_delta } = settings.lambda {
        if u.as_slice() != u0 {
            lambda = adaptive_lambda_raw(&a, &u, u0, weight, target_delta);
        }
    }

    for it in 1..=settings.max_iters {
        let dt = stepper.dt(lambda);
        stepper.step(&u, &a, u0, lambda, dt, &mut next)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: it });
        }
        reg.apply(&next, &mut a_next);
        if let LambdaRule::Adaptive { target_delta } = settings.lambda {
            lambda = adaptive_lambda_raw(&a_next, &next, u0, weight, target_delta);
        }

        let rate = diff_norm2(&next, &u) / dt;
        let fid = diff_norm2(&next, u0);
        trace.residual_history.push(rate);
        trace.fidelity_history.push(weight.sqrt() * fid);
        trace.lambda_history.push(lambda);
        trace.energy_history.push(reg.energy(&next) + 0.5 * lambda * weight * fid * fid);
        trace.iters_run = it;
        trace.dt_used = dt;

        std::mem::swap(&mut u, &mut next);
        std::mem::swap(&mut a, &mut a_next);

        if rate <= settings.tol * u0_norm
            && relative_stationary_residual(&a, &u, u0, lambda) <= CERTIFICATE_FACTOR * settings.tol
        {
            trace.converged = true;
            break;
        }
    }
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok((u, trace))
}
