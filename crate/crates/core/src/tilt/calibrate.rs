use super::measure::{solve_b_with, SolveOptions, MAX_BURN_IN};
use crate::env::{sample_environment, EnvSpec, Environment};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Upper end of every tilt search bracket.
pub const ETA_MAX: f64 = -1e-6;

/// Result of solving `E_x^{zeta,eta}[H_y] = (y - x) / v` for `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Calibration {
    Tilt {
        eta: f64,
        expected_time: f64,
        residual: f64,
        iterations: usize,
    },
    /// The mean hitting time does not cross the target inside the bracket.
    NoSolution {
        bracket: (f64, f64),
        times: (f64, f64),
        target: f64,
    },
}

impl Calibration {
    pub fn eta(&self) -> Option<f64> {
        match self {
            Calibration::Tilt { eta, .. } => Some(*eta),
            Calibration::NoSolution { .. } => None,
        }
    }
}

/// Bisection for the tilt making the quenched mean speed from `x` to `y`
/// equal `v`, over `[-v^2/2 - 5, -1e-6]`. At the left end the drift is at
/// least `v` everywhere.
pub fn calibrate_eta(env: &Environment, x: f64, y: f64, v: f64, opts: SolveOptions) -> Result<Calibration> {
    if !(v > 0.0 && v.is_finite()) {
        return invalid(format!("speed v = {v} must be > 0"));
    }
    if !(x < y) {
        return invalid(format!("calibration needs x < y, got {x}, {y}"));
    }
    let target = (y - x) / v;
    let mean_time = |eta: f64| -> Result<f64> { solve_b_with(env, eta, (x, y), opts)?.expected_hitting_time(x, y) };
    let (mut lo, mut hi) = (-0.5 * v * v - 5.0, ETA_MAX);
    let (t_lo, t_hi) = (mean_time(lo)?, mean_time(hi)?);
    if !(t_lo <= target && target <= t_hi) {
        return Ok(Calibration::NoSolution { bracket: (lo, hi), times: (t_lo, t_hi), target });
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let m = mean_time(mid)?;
        let residual = (m - target).abs() / target;
        if residual <= 1e-8 || iterations >= 200 || hi - lo <= 1e-15 * mid.abs() {
            if residual > 1e-4 {
                return Err(Error::Integration(format!("calibration stalled at residual {residual:e}")));
            }
            return Ok(Calibration::Tilt { eta: mid, expected_time: m, residual, iterations });
        }
        // Mean hitting time increases as the tilt weakens.
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Annealed log moment generating function and its slope at one tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lmgf {
    pub eta: f64,
    pub value: f64,
    pub derivative: f64,
    /// Difference between the central quotients at steps `d` and `d/2`.
    pub derivative_error: f64,
}

/// A sample of `spec` covering `n_cells` unit cells right of 0 plus the
/// largest burn-in margin.
pub fn annealed_environment(spec: &EnvSpec, n_cells: usize, seed: u64) -> Result<Environment> {
    if n_cells == 0 {
        return invalid("need at least one cell");
    }
    let s = spec.clone().with_window(-MAX_BURN_IN - 2.0, n_cells as f64 + 2.0);
    sample_environment(&s, seed)
}

fn ergodic_mean(env: &Environment, eta: f64, n_cells: usize, opts: SolveOptions) -> Result<f64> {
    let n = n_cells as f64;
    Ok(solve_b_with(env, eta, (0.0, n), opts)?.log_z(0.0, n)? / n)
}

fn central_slope(env: &Environment, eta: f64, d: f64, n_cells: usize, opts: SolveOptions) -> Result<f64> {
    Ok((ergodic_mean(env, eta + d, n_cells, opts)? - ergodic_mean(env, eta - d, n_cells, opts)?) / (2.0 * d))
}

/// `L(eta)` as the average of `ln Z_{k,k+1}` over the cells of `env`.
pub fn lmgf_on(env: &Environment, eta: f64, n_cells: usize, opts: SolveOptions) -> Result<Lmgf> {
    if !(eta < 0.0) {
        return invalid(format!("tilt eta = {eta} must be < 0"));
    }
    let d = 1e-3 * eta.abs();
    let value = ergodic_mean(env, eta, n_cells, opts)?;
    let derivative = central_slope(env, eta, d, n_cells, opts)?;
    let half = central_slope(env, eta, 0.5 * d, n_cells, opts)?;
    Ok(Lmgf { eta, value, derivative, derivative_error: (derivative - half).abs() })
}

pub fn annealed_lmgf(spec: &EnvSpec, eta: f64, n_cells: usize, seed: u64) -> Result<Lmgf> {
    lmgf_on(&annealed_environment(spec, n_cells, seed)?, eta, n_cells, SolveOptions::default())
}

/// Solves `L'(eta) = 1/v` on a fixed environment sample.
pub fn eta_bar_on(env: &Environment, v: f64, n_cells: usize, opts: SolveOptions) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return invalid(format!("speed v = {v} must be > 0"));
    }
    // L' lies between the inverse drift bounds, which pins eta_bar to
    // [-v^2/2, -v^2/2 + es - ei].
    let spread = env.es() - env.ei();
    let mut lo = -0.5 * v * v - 0.01 * (1.0 + 0.5 * v * v);
    let mut hi = (-0.5 * v * v + spread + 0.01).min(ETA_MAX);
    let slope = |eta: f64| central_slope(env, eta, 1e-3 * eta.abs(), n_cells, opts);
    let goal = 1.0 / v;
    let (mut s_lo, mut s_hi) = (slope(lo)?, slope(hi)?);
    if !(s_lo <= goal && goal <= s_hi) {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid.abs() {
            break;
        }
        let s = slope(mid)?;
        if s < s_lo - 1e-9 || s > s_hi + 1e-9 {
            return Err(Error::Integration(format!("L' not monotone near eta = {mid}")));
        }
        if s < goal {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn eta_bar(spec: &EnvSpec, v: f64, n_cells: usize, seed: u64) -> Result<f64> {
    eta_bar_on(&annealed_environment(spec, n_cells, seed)?, v, n_cells, SolveOptions::default())
}

/// `v1 = sqrt(2(es + 1))` and `v2 = inf{v > v1 + 1 : |eta_bar(v)| >= 2 v1^2 + 2}`.
///
/// Since `eta_bar` is the inverse of `eta -> 1/L'(eta)`, the infimum is
/// `max(v1 + 1, 1/L'(-(2 v1^2 + 2)))`.
pub fn v1_v2_on(env: &Environment, n_cells: usize, opts: SolveOptions) -> Result<(f64, f64)> {
    let v1 = (2.0 * (env.es() + 1.0)).sqrt();
    let eta = -(2.0 * v1 * v1 + 2.0);
    let v_star = 1.0 / central_slope(env, eta, 1e-3 * eta.abs(), n_cells, opts)?;
    Ok((v1, v_star.max(v1 + 1.0)))
}

pub fn v1_v2(spec: &EnvSpec, n_cells: usize, seed: u64) -> Result<(f64, f64)> {
    v1_v2_on(&annealed_environment(spec, n_cells, seed)?, n_cells, SolveOptions::default())
}
