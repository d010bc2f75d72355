use super::grid::GridFunction;
use crate::branching::OffspringDistribution;
use crate::env::Environment;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Time discretisation of the diffusion part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler; kept as an oracle for the default scheme.
    Explicit,
    /// Crank-Nicolson with backward-Euler start-up steps.
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dx: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// Largest tolerated deviation from the far-field state inside a guard band.
    pub guard_tol: f64,
    /// Number of initial steps whose diffusion is done by two half backward-Euler steps.
    pub rannacher_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { dx: 0.1, dt: 0.01, scheme: Scheme::Theta, guard_tol: 1e-8, rannacher_steps: 2 }
    }
}

impl SolverConfig {
    pub fn with_grid(mut self, dx: f64, dt: f64) -> Self {
        self.dx = dx;
        self.dt = dt;
        self
    }

    pub fn explicit(mut self) -> Self {
        self.scheme = Scheme::Explicit;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0) || !(self.dt > 0.0) || !self.dx.is_finite() || !self.dt.is_finite() {
            return invalid("dx and dt must be positive and finite");
        }
        if self.scheme == Scheme::Explicit && self.dt > 0.45 * self.dx * self.dx {
            return Err(Error::Stability(format!(
                "explicit scheme needs dt <= 0.45 dx^2 = {}, got dt = {}",
                0.45 * self.dx * self.dx,
                self.dt
            )));
        }
        Ok(())
    }
}

/// Initial datum of an F-KPP run.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// `1_{[y, inf)}`, sampled as cell averages on the run grid.
    Heaviside(f64),
    /// Explicit data; its grid is the computational grid.
    Grid(GridFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkppRun {
    pub initial: Initial,
    /// Computational domain for Heaviside data.
    pub x_lo: f64,
    pub x_hi: f64,
    /// Output times, non-decreasing; the last one is the horizon.
    pub snapshots: Vec<f64>,
    /// Point whose value is recorded after every step.
    pub probe: Option<f64>,
    pub config: SolverConfig,
    /// Allow offspring laws with mean other than two.
    pub allow_unnormalized: bool,
}

impl FkppRun {
    pub fn heaviside(y: f64, x_lo: f64, x_hi: f64, snapshots: Vec<f64>) -> Self {
        FkppRun {
            initial: Initial::Heaviside(y),
            x_lo,
            x_hi,
            snapshots,
            probe: None,
            config: SolverConfig::default(),
            allow_unnormalized: false,
        }
    }

    pub fn from_grid(init: GridFunction, snapshots: Vec<f64>) -> Self {
        let (x_lo, x_hi) = (init.x_lo, init.x_hi());
        FkppRun {
            initial: Initial::Grid(init),
            x_lo,
            x_hi,
            snapshots,
            probe: None,
            config: SolverConfig::default(),
            allow_unnormalized: false,
        }
    }

    pub fn with_config(mut self, config: SolverConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_probe(mut self, x: f64) -> Self {
        self.probe = Some(x);
        self
    }

    pub fn t_end(&self) -> f64 {
        self.snapshots.last().copied().unwrap_or(0.0)
    }

    fn initial_grid(&self) -> Result<GridFunction> {
        match &self.initial {
            Initial::Grid(g) => {
                if (g.dx - self.config.dx).abs() > 1e-12 * g.dx {
                    return invalid("initial grid spacing differs from the solver dx");
                }
                Ok(g.clone())
            }
            Initial::Heaviside(y) => {
                let n = node_count(self.x_lo, self.x_hi, self.config.dx)?;
                Ok(heaviside(*y, self.x_lo, self.config.dx, n))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkppSolution {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    /// Node updates that left `[0, 1]` and were clamped back.
    pub clamp_events: usize,
    /// Largest distance of a clamped value from `[0, 1]`.
    pub clamp_max: f64,
    /// `(t, w(t, probe))` after every step, starting at `t = 0`.
    pub probe_trace: Vec<(f64, f64)>,
    pub steps: usize,
}

impl FkppSolution {
    pub fn last(&self) -> &GridFunction {
        self.snapshots.last().expect("at least one snapshot")
    }
}

/// `F(w) = (1 - w) - sum_k p_k (1 - w)^k`.
pub fn nonlinearity_f(dist: &OffspringDistribution, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return invalid(format!("F is defined on [0, 1], got w = {w}"));
    }
    Ok(Nonlinearity::new(dist).eval(w))
}

/// `F(w) = w (1 - w) g(1 - w)` with `g(s) = sum_j c_j s^j`,
/// `c_j = sum_{k >= j + 2} p_k`; this form has no cancellation near `w = 0`.
#[derive(Debug, Clone)]
pub(crate) struct Nonlinearity {
    coeffs: Vec<f64>,
}

impl Nonlinearity {
    pub(crate) fn new(dist: &OffspringDistribution) -> Self {
        let p = dist.probs();
        let kmax = p.len();
        let mut coeffs = vec![0.0; kmax.saturating_sub(1).max(1)];
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c = (j + 2..=kmax).map(|k| p[k - 1]).sum();
        }
        Nonlinearity { coeffs }
    }

    #[inline]
    pub(crate) fn eval(&self, w: f64) -> f64 {
        let s = 1.0 - w;
        let mut g = 0.0;
        for c in self.coeffs.iter().rev() {
            g = g * s + c;
        }
        w * s * g
    }
}

/// Width of the guard band at time `t`.
pub fn guard_width(t: f64) -> f64 {
    10.0 + 4.0 * t.max(0.0).sqrt()
}

const LOG_TAIL: f64 = 23.0;
pub(crate) const ROUNDING_SLACK: f64 = 1e-12;

/// Grid-aligned domain for `w^y` up to time `t`, wide enough that the true
/// solution is within about `1e-10` of its far-field state in both guard
/// bands, and containing `window`.
pub fn fkpp_domain(y: f64, t: f64, es: f64, window: (f64, f64), dx: f64) -> (f64, f64) {
    let g = guard_width(t);
    let left = y - (2.0 * t * (es * t + LOG_TAIL)).sqrt() - g;
    let right = y + (2.0 * t * LOG_TAIL).sqrt() + g;
    let lo = left.min(window.0 - g);
    let hi = right.max(window.1 + g);
    ((lo / dx).floor() * dx, (hi / dx).ceil() * dx)
}

/// Cell averages of `1_{[y, inf)}` on `n` nodes from `x_lo`.
pub fn heaviside(y: f64, x_lo: f64, dx: f64, n: usize) -> GridFunction {
    GridFunction::from_fn(x_lo, dx, n, |x| ((x + 0.5 * dx - y) / dx).clamp(0.0, 1.0))
}

pub(crate) fn node_count(x_lo: f64, x_hi: f64, dx: f64) -> Result<usize> {
    if !(x_hi > x_lo) {
        return invalid("empty computational domain");
    }
    let s = (x_hi - x_lo) / dx;
    let n = s.round();
    if (s - n).abs() > 1e-6 {
        return invalid(format!("domain length {} is not a multiple of dx = {dx}", x_hi - x_lo));
    }
    if n < 4.0 {
        return invalid("domain needs at least five nodes");
    }
    Ok(n as usize + 1)
}

#[derive(Clone, Copy)]
enum Reaction<'a> {
    Fkpp(&'a Nonlinearity),
    Linear,
}

/// Which domain edges carry a far-field state that must stay untouched.
#[derive(Debug, Clone, Copy)]
struct GuardPlan {
    left: bool,
    right: bool,
    relative: bool,
}

struct Evolver<'a> {
    xi: Vec<f64>,
    reaction: Reaction<'a>,
    dx: f64,
    scheme: Scheme,
    rannacher_steps: usize,
    c_prime: Vec<f64>,
    rhs: Vec<f64>,
    clamp_events: usize,
    clamp_max: f64,
}

impl<'a> Evolver<'a> {
    fn new(env: &Environment, grid: &GridFunction, reaction: Reaction<'a>, config: &SolverConfig) -> Result<Self> {
        env.check_domain(grid.x_lo)?;
        env.check_domain(grid.x_hi())?;
        let xi = (0..grid.len()).map(|i| env.eval_potential(grid.x(i))).collect::<Result<Vec<_>>>()?;
        let n = grid.len();
        Ok(Evolver {
            xi,
            reaction,
            dx: grid.dx,
            scheme: config.scheme,
            rannacher_steps: config.rannacher_steps,
            c_prime: vec![0.0; n],
            rhs: vec![0.0; n],
            clamp_events: 0,
            clamp_max: 0.0,
        })
    }

    fn react(&self, u: &mut [f64], h: f64) {
        match self.reaction {
            Reaction::Linear => {
                for (v, xi) in u.iter_mut().zip(&self.xi) {
                    *v *= (xi * h).exp();
                }
            }
            Reaction::Fkpp(f) => {
                for (v, &xi) in u.iter_mut().zip(&self.xi) {
                    let w = *v;
                    let k1 = xi * f.eval(w);
                    let k2 = xi * f.eval(w + 0.5 * h * k1);
                    let k3 = xi * f.eval(w + 0.5 * h * k2);
                    let k4 = xi * f.eval(w + h * k3);
                    *v = w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
            }
        }
    }

    /// Theta step of `u_t = u''/2` on the interior nodes; edges are held.
    fn diffuse_theta(&mut self, u: &mut [f64], h: f64, theta: f64) {
        let n = u.len();
        let r = h / (2.0 * self.dx * self.dx);
        let a = -theta * r;
        let b = 1.0 + 2.0 * theta * r;
        let e = (1.0 - theta) * r;
        let m = n - 2;
        for k in 0..m {
            let i = k + 1;
            let mut d = u[i] + e * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
            if i == 1 {
                d -= a * u[0];
            }
            if i == n - 2 {
                d -= a * u[n - 1];
            }
            self.rhs[k] = d;
        }
        // Thomas algorithm with constant off-diagonals `a`.
        self.c_prime[0] = a / b;
        self.rhs[0] /= b;
        for k in 1..m {
            let denom = b - a * self.c_prime[k - 1];
            self.c_prime[k] = a / denom;
            self.rhs[k] = (self.rhs[k] - a * self.rhs[k - 1]) / denom;
        }
        for k in (0..m - 1).rev() {
            self.rhs[k] -= self.c_prime[k] * self.rhs[k + 1];
        }
        u[1..n - 1].copy_from_slice(&self.rhs[..m]);
    }

    fn diffuse_explicit(&mut self, u: &mut [f64], h: f64) {
        let n = u.len();
        let r = h / (2.0 * self.dx * self.dx);
        self.rhs[..n].copy_from_slice(u);
        for i in 1..n - 1 {
            u[i] = self.rhs[i] + r * (self.rhs[i + 1] - 2.0 * self.rhs[i] + self.rhs[i - 1]);
        }
    }

    fn step(&mut self, u: &mut [f64], h: f64, index: usize) {
        self.react(u, 0.5 * h);
        match self.scheme {
            Scheme::Explicit => self.diffuse_explicit(u, h),
            Scheme::Theta if index < self.rannacher_steps => {
                self.diffuse_theta(u, 0.5 * h, 1.0);
                self.diffuse_theta(u, 0.5 * h, 1.0);
            }
            Scheme::Theta => self.diffuse_theta(u, h, 0.5),
        }
        self.react(u, 0.5 * h);
        if let Reaction::Fkpp(_) = self.reaction {
            for v in u.iter_mut() {
                let c = v.clamp(0.0, 1.0);
                let excess = (*v - c).abs();
                // Rounding-level excursions are clamped without being counted.
                if excess > ROUNDING_SLACK {
                    self.clamp_events += 1;
                    self.clamp_max = self.clamp_max.max(excess);
                }
                *v = c;
            }
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return invalid("at least one snapshot time is required");
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return invalid("snapshot times must be finite and >= 0");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("snapshot times must be non-decreasing");
    }
    Ok(())
}

fn guard_nodes(grid: &GridFunction, t: f64) -> Result<usize> {
    let k = (guard_width(t) / grid.dx).ceil() as usize + 1;
    if 2 * k >= grid.len() {
        return invalid(format!(
            "domain of width {} cannot hold two guard bands of width {}",
            grid.x_hi() - grid.x_lo,
            guard_width(t)
        ));
    }
    Ok(k)
}

fn check_guard(u: &[f64], k: usize, plan: GuardPlan, tol: f64, t: f64) -> Result<()> {
    let n = u.len();
    let scale = if plan.relative { u.iter().fold(1.0f64, |m, v| m.max(v.abs())) } else { 1.0 };
    let band = |edge: usize, range: std::ops::Range<usize>, side: &str| -> Result<()> {
        let dev = range.map(|i| (u[i] - u[edge]).abs()).fold(0.0, f64::max);
        if dev > tol * scale {
            return Err(Error::BoundaryContamination(format!("{side} guard band deviates by {dev:e} at t = {t}")));
        }
        Ok(())
    };
    if plan.left {
        band(0, 0..k, "left")?;
    }
    if plan.right {
        band(n - 1, n - k..n, "right")?;
    }
    Ok(())
}

struct Output {
    snapshots: Vec<GridFunction>,
    probe_trace: Vec<(f64, f64)>,
    steps: usize,
}

fn evolve(
    ev: &mut Evolver<'_>,
    init: GridFunction,
    times: &[f64],
    dt: f64,
    probe: Option<f64>,
    plan: GuardPlan,
    guard_tol: f64,
) -> Result<Output> {
    let mut u = init.values.clone();
    let (x_lo, dx) = (init.x_lo, init.dx);
    let k = guard_nodes(&init, times[times.len() - 1])?;
    let geom = GridFunction { x_lo, dx, values: Vec::new() };
    let probe_val = |u: &[f64]| -> Result<Option<f64>> { probe.map(|x| geom.eval_on(u, x)).transpose() };
    let mut trace = Vec::new();
    if let Some(v) = probe_val(&u)? {
        trace.push((0.0, v));
    }
    let mut snapshots = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut steps = 0usize;
    for &target in times {
        while target - t > 1e-12 * target.max(1.0) {
            let h = if target - t <= dt * (1.0 + 1e-9) { target - t } else { dt };
            ev.step(&mut u, h, steps);
            steps += 1;
            t = if h == target - t { target } else { t + h };
            if let Some(v) = probe_val(&u)? {
                trace.push((t, v));
            }
        }
        check_guard(&u, k, plan, guard_tol, target)?;
        snapshots.push(GridFunction { x_lo, dx, values: u.clone() });
    }
    Ok(Output { snapshots, probe_trace: trace, steps })
}

impl GridFunction {
    /// Linear interpolation of `values` laid out on this grid's geometry.
    fn eval_on(&self, values: &[f64], x: f64) -> Result<f64> {
        let s = (x - self.x_lo) / self.dx;
        let n = values.len();
        if s < -1e-9 || s > (n - 1) as f64 + 1e-9 {
            return Err(Error::OutOfDomain { x, lo: self.x_lo, hi: self.x_lo + (n - 1) as f64 * self.dx });
        }
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        let f = (s - i as f64).clamp(0.0, 1.0);
        Ok(values[i] * (1.0 - f) + values[i + 1] * f)
    }
}

fn band_constant(u: &[f64], range: std::ops::Range<usize>) -> Option<f64> {
    let first = u[range.start];
    if u[range].iter().all(|v| *v == first) {
        Some(first)
    } else {
        None
    }
}

/// Solves the F-KPP equation for the run's initial datum.
pub fn solve_fkpp(env: &Environment, dist: &OffspringDistribution, run: &FkppRun) -> Result<FkppSolution> {
    run.config.validate()?;
    check_times(&run.snapshots)?;
    if !run.allow_unnormalized && !dist.is_normalized() {
        return invalid("offspring law must have mean two; normalise it first or allow it explicitly");
    }
    let init = run.initial_grid()?;
    if init.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("F-KPP initial data must lie in [0, 1]");
    }
    let n = init.len();
    let k = guard_nodes(&init, run.t_end())?;
    let far_field = |r: std::ops::Range<usize>| band_constant(&init.values, r).filter(|v| *v == 0.0 || *v == 1.0);
    let (left, right) = (far_field(0..k).is_some(), far_field(n - k..n).is_some());
    if let Initial::Heaviside(y) = run.initial {
        if !(left && right) {
            return Err(Error::BoundaryContamination(format!("initial jump at y = {y} lies inside a guard band")));
        }
    }
    let plan = GuardPlan { left, right, relative: false };
    let nl = Nonlinearity::new(dist);
    let mut ev = Evolver::new(env, &init, Reaction::Fkpp(&nl), &run.config)?;
    let out = evolve(&mut ev, init, &run.snapshots, run.config.dt, run.probe, plan, run.config.guard_tol)?;
    Ok(FkppSolution {
        times: run.snapshots.clone(),
        snapshots: out.snapshots,
        clamp_events: ev.clamp_events,
        clamp_max: ev.clamp_max,
        probe_trace: out.probe_trace,
        steps: out.steps,
    })
}

/// Solves the parabolic Anderson model to `t_end` with the default scheme.
pub fn solve_pam(env: &Environment, init: &GridFunction, t_end: f64, dt: f64) -> Result<GridFunction> {
    let config = SolverConfig { dx: init.dx, dt, ..SolverConfig::default() };
    let mut snaps = solve_pam_with(env, init, &[t_end], &config)?;
    Ok(snaps.pop().expect("one snapshot"))
}

/// Parabolic Anderson model with snapshots. Guard bands are checked, relative
/// to the largest value, on the sides where the initial datum vanishes.
pub fn solve_pam_with(
    env: &Environment,
    init: &GridFunction,
    times: &[f64],
    config: &SolverConfig,
) -> Result<Vec<GridFunction>> {
    let config = SolverConfig { dx: init.dx, ..*config };
    config.validate()?;
    check_times(times)?;
    if init.values.iter().any(|v| !v.is_finite()) {
        return invalid("initial data must be finite");
    }
    let n = init.len();
    if n < 5 {
        return invalid("domain needs at least five nodes");
    }
    let k = guard_nodes(init, times[times.len() - 1])?;
    let zero = |r: std::ops::Range<usize>| band_constant(&init.values, r) == Some(0.0);
    let plan = GuardPlan { left: zero(0..k), right: zero(n - k..n), relative: true };
    let mut ev = Evolver::new(env, init, Reaction::Linear, &config)?;
    let out = evolve(&mut ev, init.clone(), times, config.dt, None, plan, config.guard_tol)?;
    Ok(out.snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvSpec};

    fn binary() -> OffspringDistribution {
        OffspringDistribution::binary()
    }

    #[test]
    fn nonlinearity_values() {
        let d = binary();
        assert!((nonlinearity_f(&d, 0.5).unwrap() - 0.25).abs() < 1e-15);
        let d13 = OffspringDistribution::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap();
        // Direct series: 0.5 - (0.5 * 0.5 + 0.5 * 0.125).
        let direct = 0.5 - (0.5 * 0.5 + 0.5 * 0.5f64.powi(3));
        assert!((nonlinearity_f(&d13, 0.5).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.1875).abs() < 1e-15);
        for d in [&d, &d13] {
            assert_eq!(nonlinearity_f(d, 0.0).unwrap(), 0.0);
            assert_eq!(nonlinearity_f(d, 1.0).unwrap(), 0.0);
        }
        assert!(nonlinearity_f(&d, 1.5).is_err());
        assert!(nonlinearity_f(&d, -0.1).is_err());
    }

    #[test]
    fn nonlinearity_derivative_at_zero_is_mu_minus_one() {
        for pairs in [vec![(2, 1.0)], vec![(1, 0.2), (4, 0.8)], vec![(3, 1.0)]] {
            let d = OffspringDistribution::from_pairs(&pairs).unwrap();
            let h = 1e-7;
            let slope = nonlinearity_f(&d, h).unwrap() / h;
            assert!((slope - (d.mean() - 1.0)).abs() < 1e-5, "{slope}");
        }
    }

    #[test]
    fn normalised_nonlinearity_bounds() {
        let d = OffspringDistribution::from_pairs(&[(1, 0.3), (2, 0.2), (5, 0.5)]).unwrap().normalized().0;
        let f = |w: f64| nonlinearity_f(&d, w).unwrap();
        let h = 1e-4;
        for i in 1..100 {
            let w = i as f64 / 100.0;
            let d1 = (f(w + h) - f(w - h)) / (2.0 * h);
            let d2 = (f(w + h) - 2.0 * f(w) + f(w - h)) / (h * h);
            assert!(d1 <= 1.0 + 1e-6);
            assert!(d2 >= -d.second_moment() + 2.0 - 1e-3);
        }
    }

    #[test]
    fn zero_time_returns_initial_data() {
        let env = Environment::constant(1.0, -50.0, 50.0);
        let run = FkppRun::heaviside(1.0, -40.0, 40.0, vec![0.0]);
        let sol = solve_fkpp(&env, &binary(), &run).unwrap();
        assert_eq!(sol.snapshots[0], heaviside(1.0, -40.0, 0.1, 801));
        assert_eq!(sol.steps, 0);
    }

    #[test]
    fn explicit_stability_guard() {
        let env = Environment::constant(1.0, -50.0, 50.0);
        let cfg = SolverConfig::default().explicit();
        let run = FkppRun::heaviside(0.0, -40.0, 40.0, vec![1.0]).with_config(cfg);
        assert!(matches!(solve_fkpp(&env, &binary(), &run), Err(Error::Stability(_))));
    }

    #[test]
    fn contamination_is_detected() {
        let env = Environment::constant(1.0, -30.0, 30.0);
        let run = FkppRun::heaviside(0.0, -25.0, 25.0, vec![12.0]);
        assert!(matches!(solve_fkpp(&env, &binary(), &run), Err(Error::BoundaryContamination(_))));
    }

    #[test]
    fn unnormalised_law_needs_opt_in() {
        let env = Environment::constant(1.0, -60.0, 60.0);
        let d = OffspringDistribution::from_pairs(&[(3, 1.0)]).unwrap();
        let mut run = FkppRun::heaviside(0.0, -50.0, 50.0, vec![1.0]);
        assert!(solve_fkpp(&env, &d, &run).is_err());
        run.allow_unnormalized = true;
        assert!(solve_fkpp(&env, &d, &run).is_ok());
    }

    #[test]
    fn pam_constant_solution() {
        let env = Environment::constant(1.0, -30.0, 30.0);
        let init = GridFunction::from_fn(-20.0, 0.1, 401, |_| 1.0);
        let u = solve_pam(&env, &init, 2.0, 0.01).unwrap();
        let e2 = 2f64.exp();
        assert!(u.values.iter().all(|v| ((v - e2) / e2).abs() < 1e-4));
        let zero = GridFunction::from_fn(-20.0, 0.1, 401, |_| 0.0);
        assert!(solve_pam(&env, &zero, 2.0, 0.01).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pam_is_linear() {
        let spec = EnvSpec::uniform_iid(0.5, 1.5, -40.0, 40.0);
        let env = sample_environment(&spec, 5).unwrap();
        let a = GridFunction::from_fn(-30.0, 0.1, 601, |x| (-x * x).exp());
        let b = GridFunction::from_fn(-30.0, 0.1, 601, |x| if x.abs() < 3.0 { 1.0 + x.sin() } else { 0.0 });
        let comb = GridFunction::from_fn(-30.0, 0.1, 601, |x| {
            2.0 * (-x * x).exp() - 0.5 * if x.abs() < 3.0 { 1.0 + x.sin() } else { 0.0 }
        });
        let ua = solve_pam(&env, &a, 1.0, 0.01).unwrap();
        let ub = solve_pam(&env, &b, 1.0, 0.01).unwrap();
        let uc = solve_pam(&env, &comb, 1.0, 0.01).unwrap();
        let scale = uc.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..uc.len() {
            let lin = 2.0 * ua.values[i] - 0.5 * ub.values[i];
            assert!((lin - uc.values[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn domain_helper_is_grid_aligned() {
        let (lo, hi) = fkpp_domain(2.0, 4.0, 1.0, (0.0, 0.0), 0.1);
        assert!(lo < -10.0 && hi > 20.0);
        assert!(((lo / 0.1).round() * 0.1 - lo).abs() < 1e-9);
        assert!(node_count(lo, hi, 0.1).is_ok());
    }
}
