use crate::env::Environment;
use crate::error::{invalid, Error, Result};
use crate::pde::GridFunction;

/// Upper cap on the Riccati burn-in margin.
pub const MAX_BURN_IN: f64 = 100.0;

/// Tolerance for the drift bounds on the retained grid.
pub const BOUND_TOL: f64 = 1e-6;

/// Default burn-in `20 / sqrt(2|eta|)`, capped at [`MAX_BURN_IN`].
pub fn default_burn_in(eta: f64) -> f64 {
    (20.0 / (2.0 * eta.abs()).sqrt()).min(MAX_BURN_IN)
}

/// Default Euler step `1e-3 * min(1, 1/|eta|)`.
pub fn default_dt(eta: f64) -> f64 {
    1e-3 * (1.0 / eta.abs()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Requested grid step; refined so that knots fall on nodes.
    pub h: f64,
    pub burn_in: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { h: 1e-3, burn_in: None }
    }
}

/// Drift table `b = (ln Z)'` of the tilted measure for a fixed `(env, eta)`,
/// with the log-normaliser and the mean-hitting-time slope alongside.
#[derive(Debug, Clone)]
pub struct TiltedMeasure {
    env: Environment,
    eta: f64,
    burn_in: f64,
    x0: f64,
    h: f64,
    b: Vec<f64>,
    // g = b^2 + 2(zeta + eta) = -b'
    g: Vec<f64>,
    ln_z: Vec<f64>,
    // p = d/dx E_x[H_y], and its antiderivative
    p: Vec<f64>,
    p_int: Vec<f64>,
    residuals: Vec<f64>,
}

/// Solves the Riccati equation for `b` on `domain` with default options.
pub fn solve_b(env: &Environment, eta: f64, domain: (f64, f64)) -> Result<TiltedMeasure> {
    solve_b_with(env, eta, domain, SolveOptions::default())
}

fn rhs(env: &Environment, es: f64, eta: f64, x: f64, b: f64, p: f64) -> (f64, f64) {
    let zeta = env.eval_unchecked(x) - es;
    (-2.0 * (zeta + eta) - b * b, -2.0 - 2.0 * b * p)
}

pub fn solve_b_with(env: &Environment, eta: f64, domain: (f64, f64), opts: SolveOptions) -> Result<TiltedMeasure> {
    if !(eta < 0.0 && eta.is_finite()) {
        return invalid(format!("tilt eta = {eta} must be < 0"));
    }
    let (lo, hi) = domain;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return invalid(format!("empty domain [{lo}, {hi}]"));
    }
    if !(opts.h > 0.0) {
        return invalid("grid step must be > 0");
    }
    let burn_in = opts.burn_in.unwrap_or_else(|| default_burn_in(eta));
    if !(burn_in >= 0.0) {
        return invalid("burn-in must be >= 0");
    }
    let dx = env.spec().dx;
    let h = dx / (dx / opts.h).ceil().max(1.0);
    let origin = env.knot_position(0);
    let ja = ((lo - origin) / h + 1e-9).floor() as i64;
    let jb = ((hi - origin) / h - 1e-9).ceil() as i64;
    let js = ja - (burn_in / h).ceil() as i64;
    let node = |j: i64| origin + j as f64 * h;
    env.check_domain(node(js))?;
    env.check_domain(node(jb))?;

    let es = env.es();
    let n = (jb - ja + 1) as usize;
    let mut b = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut bj = (2.0 * (env.eval_unchecked(node(js)) - es + eta).abs()).sqrt();
    let mut pj = -1.0 / bj;
    for j in js..=jb {
        if j >= ja {
            b.push(bj);
            p.push(pj);
        }
        if j == jb {
            break;
        }
        let x = node(j);
        let xm = x + 0.5 * h;
        let (k1b, k1p) = rhs(env, es, eta, x, bj, pj);
        let (k2b, k2p) = rhs(env, es, eta, xm, bj + 0.5 * h * k1b, pj + 0.5 * h * k1p);
        let (k3b, k3p) = rhs(env, es, eta, xm, bj + 0.5 * h * k2b, pj + 0.5 * h * k2p);
        let (k4b, k4p) = rhs(env, es, eta, node(j + 1), bj + h * k3b, pj + h * k3p);
        bj += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        pj += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if !bj.is_finite() || !pj.is_finite() {
            return Err(Error::Integration(format!("Riccati solution blew up at x = {}", node(j + 1))));
        }
    }

    let g: Vec<f64> =
        (0..n).map(|i| b[i] * b[i] + 2.0 * (env.eval_unchecked(node(ja + i as i64)) - es + eta)).collect();
    let mut ln_z = vec![0.0; n];
    let mut p_int = vec![0.0; n];
    let mut residuals = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        // Trapezoid rule with the endpoint-derivative correction; both
        // derivatives are available in closed form from the ODEs.
        ln_z[i + 1] = ln_z[i] + 0.5 * h * (b[i] + b[i + 1]) + h * h / 12.0 * (g[i + 1] - g[i]);
        let (q0, q1) = (-2.0 - 2.0 * b[i] * p[i], -2.0 - 2.0 * b[i + 1] * p[i + 1]);
        p_int[i + 1] = p_int[i] + 0.5 * h * (p[i] + p[i + 1]) - h * h / 12.0 * (q1 - q0);
        residuals.push(((b[i + 1] - b[i]) / h + 0.5 * (g[i] + g[i + 1])).abs());
    }

    let tm = TiltedMeasure { env: env.clone(), eta, burn_in, x0: node(ja), h, b, g, ln_z, p, p_int, residuals };
    let (vlo, vhi) = (tm.lower_speed(), tm.upper_speed());
    if let Some(i) = tm.b.iter().position(|&v| v < vlo - BOUND_TOL || v > vhi + BOUND_TOL) {
        return Err(Error::Integration(format!("b = {} at x = {} outside [{vlo}, {vhi}]", tm.b[i], tm.x(i))));
    }
    Ok(tm)
}

#[inline]
fn hermite(f0: f64, d0: f64, f1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * h * d1
}

impl TiltedMeasure {
    pub fn env(&self) -> &Environment {
        &self.env
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }
    pub fn step(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.b.len()
    }
    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }
    /// Retained domain; `lnZ` is anchored at its left end.
    pub fn domain(&self) -> (f64, f64) {
        (self.x0, self.x(self.len() - 1))
    }

    /// `sqrt(2|eta|)`, the lower drift bound.
    pub fn lower_speed(&self) -> f64 {
        (2.0 * self.eta.abs()).sqrt()
    }

    /// `sqrt(2(es - ei + |eta|))`, the upper drift bound.
    pub fn upper_speed(&self) -> f64 {
        (2.0 * (self.env.es() - self.env.ei() + self.eta.abs())).sqrt()
    }

    pub fn b_table(&self) -> GridFunction {
        GridFunction { x_lo: self.x0, dx: self.h, values: self.b.clone() }
    }

    pub fn ln_z_table(&self) -> GridFunction {
        GridFunction { x_lo: self.x0, dx: self.h, values: self.ln_z.clone() }
    }

    /// `|b' + b^2 + 2(zeta + eta)|` per grid cell, with `b'` the cell
    /// difference quotient and the rest averaged over the cell ends.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let n = self.len();
        let s = (x - self.x0) / self.h;
        if !(s >= -1e-9 && s <= (n - 1) as f64 + 1e-9) {
            let (lo, hi) = self.domain();
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let i = (s.floor().max(0.0) as usize).min(n.saturating_sub(2));
        Ok((i, (s - i as f64).clamp(0.0, 1.0)))
    }

    /// Linearly interpolated drift; `None` outside the table.
    #[inline]
    pub(crate) fn drift_fast(&self, x: f64) -> Option<f64> {
        let s = (x - self.x0) / self.h;
        if !(s >= 0.0) {
            return None;
        }
        let i = s as usize;
        if i + 1 >= self.b.len() {
            return if i + 1 == self.b.len() && s == i as f64 { Some(self.b[i]) } else { None };
        }
        let f = s - i as f64;
        Some(self.b[i] + f * (self.b[i + 1] - self.b[i]))
    }

    pub fn drift(&self, x: f64) -> Result<f64> {
        let (i, f) = self.locate(x)?;
        Ok(hermite(self.b[i], -self.g[i], self.b[i + 1], -self.g[i + 1], self.h, f))
    }

    /// `ln Z(x)` relative to the anchor.
    pub fn ln_z(&self, x: f64) -> Result<f64> {
        let (i, f) = self.locate(x)?;
        Ok(hermite(self.ln_z[i], self.b[i], self.ln_z[i + 1], self.b[i + 1], self.h, f))
    }

    fn p_integral(&self, x: f64) -> Result<f64> {
        let (i, f) = self.locate(x)?;
        Ok(hermite(self.p_int[i], self.p[i], self.p_int[i + 1], self.p[i + 1], self.h, f))
    }

    /// `ln Z_{x,y} = ln Z(x) - ln Z(y) = -int_x^y b <= 0`.
    pub fn log_z(&self, x: f64, y: f64) -> Result<f64> {
        if x > y {
            return invalid(format!("log_Z needs x <= y, got {x} > {y}"));
        }
        Ok(self.ln_z(x)? - self.ln_z(y)?)
    }

    /// Mean of `H_y` under the tilted law started from `x`.
    pub fn expected_hitting_time(&self, x: f64, y: f64) -> Result<f64> {
        if !(x < y) {
            return invalid(format!("expected hitting time needs x < y, got {x}, {y}"));
        }
        Ok(self.p_integral(x)? - self.p_integral(y)?)
    }
}

/// `ln Z_{x,y}` for a measure solved on `[x, y]`.
pub fn log_z(tm: &TiltedMeasure, x: f64, y: f64) -> Result<f64> {
    tm.log_z(x, y)
}

pub fn expected_hitting_time(tm: &TiltedMeasure, x: f64, y: f64) -> Result<f64> {
    tm.expected_hitting_time(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvSpec};

    #[test]
    fn constant_potential_is_a_fixed_point() {
        let env = Environment::constant(1.0, -50.0, 50.0);
        let tm = solve_b(&env, -0.5, (0.0, 10.0)).unwrap();
        assert!(tm.b_table().values.iter().all(|&b| (b - 1.0).abs() < 1e-14));
        assert!((tm.log_z(0.0, 1.0).unwrap() + 1.0).abs() < 1e-12);
        assert!((tm.expected_hitting_time(0.0, 5.0).unwrap() - 5.0).abs() < 1e-10);
        assert!(tm.max_residual() < 1e-12);
    }

    #[test]
    fn nominal_bounds() {
        let spec = EnvSpec::uniform_iid(1.0, 2.0, -60.0, 60.0);
        let env = sample_environment(&spec, 3).unwrap();
        let tm = solve_b(&env, -2.0, (0.0, 20.0)).unwrap();
        assert_eq!(tm.lower_speed(), 2.0);
        assert!((tm.upper_speed() - 6f64.sqrt()).abs() < 1e-15);
        assert!(tm.b_table().values.iter().all(|&b| (2.0..=6f64.sqrt()).contains(&b)));
    }

    #[test]
    fn residual_is_second_order() {
        let spec = EnvSpec::uniform_iid(0.5, 1.0, -60.0, 60.0);
        let env = sample_environment(&spec, 11).unwrap();
        let r = |h: f64| {
            solve_b_with(&env, -0.5, (0.0, 10.0), SolveOptions { h, burn_in: None }).unwrap().max_residual() / (h * h)
        };
        let (c1, c2) = (r(2e-3), r(1e-3));
        assert!((c1 / c2 - 1.0).abs() < 0.05, "{c1} {c2}");
        assert!(c2 * 1e-6 <= 1e-6, "{c2}");
    }

    #[test]
    fn log_z_is_additive_and_nonpositive() {
        let spec = EnvSpec::uniform_iid(0.5, 1.0, -60.0, 60.0);
        let env = sample_environment(&spec, 5).unwrap();
        let tm = solve_b(&env, -1.0, (0.0, 10.0)).unwrap();
        let (a, b, c) = (tm.log_z(0.3, 4.1).unwrap(), tm.log_z(4.1, 9.7).unwrap(), tm.log_z(0.3, 9.7).unwrap());
        assert!(a < 0.0 && b < 0.0);
        let scale = tm.ln_z(9.7).unwrap().abs();
        assert!((a + b - c).abs() <= 4.0 * f64::EPSILON * scale);
        assert_eq!(tm.log_z(2.0, 2.0).unwrap(), 0.0);
        assert!(tm.log_z(3.0, 2.0).is_err());
        assert!(tm.ln_z_table().values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn mean_time_decreases_in_start() {
        let spec = EnvSpec::uniform_iid(0.5, 1.0, -60.0, 60.0);
        let env = sample_environment(&spec, 5).unwrap();
        let tm = solve_b(&env, -1.0, (0.0, 10.0)).unwrap();
        let m: Vec<f64> = (0..9).map(|k| tm.expected_hitting_time(k as f64, 10.0).unwrap()).collect();
        assert!(m.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_input() {
        let env = Environment::constant(1.0, -10.0, 10.0);
        assert!(solve_b(&env, 0.0, (0.0, 1.0)).is_err());
        assert!(solve_b(&env, -1.0, (1.0, 0.0)).is_err());
        // burn-in of 20/sqrt(2) does not fit left of 0
        assert!(matches!(solve_b(&env, -1.0, (0.0, 1.0)), Err(Error::OutOfDomain { .. })));
        let tm = solve_b_with(&env, -1.0, (0.0, 1.0), SolveOptions { h: 1e-3, burn_in: Some(5.0) }).unwrap();
        assert!(tm.ln_z(1.5).is_err());
    }
}
