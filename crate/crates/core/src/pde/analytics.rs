use super::grid::GridFunction;
use super::solver::{fkpp_domain, guard_width, heaviside, solve_fkpp, solve_pam_with, FkppRun, SolverConfig};
use crate::branching::OffspringDistribution;
use crate::env::Environment;
use crate::error::{invalid, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `P[t][y] = w^y(t, 0) = P_0(M(t) >= y)` on a `(t, y)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub t_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl QuantileTable {
    /// Builds the table from per-`y` columns of values over `t_grid`.
    pub fn from_columns(t_grid: Vec<f64>, y_grid: Vec<f64>, columns: &[Vec<f64>]) -> Result<Self> {
        if y_grid.len() < 2 || y_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("y grid must be strictly increasing with at least two points");
        }
        if columns.len() != y_grid.len() || columns.iter().any(|c| c.len() != t_grid.len()) {
            return invalid("column shape does not match the grids");
        }
        let p = (0..t_grid.len()).map(|ti| columns.iter().map(|c| c[ti]).collect()).collect();
        Ok(QuantileTable { t_grid, y_grid, p })
    }

    /// `m_eps(t) = inf{y : P(M(t) <= y) >= eps}`, by inverse linear
    /// interpolation of `y -> P[t][y]` at level `1 - eps`, leftmost crossing.
    pub fn quantile(&self, ti: usize, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Quantile { eps, reason: "level must lie in (0, 1)".into() });
        }
        let row = &self.p[ti];
        let level = 1.0 - eps;
        if row[0] <= level {
            return Err(Error::Quantile { eps, reason: format!("below y grid at t = {}", self.t_grid[ti]) });
        }
        let j = row
            .iter()
            .position(|v| *v <= level)
            .ok_or_else(|| Error::Quantile { eps, reason: format!("above y grid at t = {}", self.t_grid[ti]) })?;
        let (y0, y1) = (self.y_grid[j - 1], self.y_grid[j]);
        let (p0, p1) = (row[j - 1], row[j]);
        let f = if p0 == p1 { 0.0 } else { (p0 - level) / (p0 - p1) };
        Ok(y0 + f * (y1 - y0))
    }

    pub fn curve(&self, eps: f64) -> Result<Vec<f64>> {
        (0..self.t_grid.len()).map(|ti| self.quantile(ti, eps)).collect()
    }

    pub fn median(&self) -> Result<Vec<f64>> {
        self.curve(0.5)
    }

    /// `m_{0.99}(t) - m_{0.01}(t)`.
    pub fn spread(&self) -> Result<Vec<f64>> {
        let lo = self.curve(0.01)?;
        let hi = self.curve(0.99)?;
        Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).collect())
    }

    /// Largest increase of `P[t][y]` along `y`; zero for an exact table.
    pub fn monotonicity_defect(&self) -> f64 {
        self.p.iter().flat_map(|row| row.windows(2).map(|w| w[1] - w[0])).fold(0.0, f64::max)
    }
}

/// One F-KPP solve per `y`, read at the origin.
pub fn quantile_table(
    env: &Environment,
    dist: &OffspringDistribution,
    y_grid: &[f64],
    t_grid: &[f64],
    config: &SolverConfig,
) -> Result<QuantileTable> {
    let t_end = t_grid.iter().copied().fold(0.0, f64::max);
    let columns = y_grid
        .par_iter()
        .map(|&y| {
            let (lo, hi) = fkpp_domain(y, t_end, env.es(), (0.0, 0.0), config.dx);
            let run = FkppRun::heaviside(y, lo, hi, t_grid.to_vec()).with_config(*config);
            let sol = solve_fkpp(env, dist, &run)?;
            sol.snapshots.iter().map(|s| s.eval(0.0)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    QuantileTable::from_columns(t_grid.to_vec(), y_grid.to_vec(), &columns)
}

/// First time with `w^y(t, 0) >= eps`, linearly interpolated between steps.
pub fn temporal_quantile(
    env: &Environment,
    dist: &OffspringDistribution,
    y: f64,
    eps: f64,
    config: &SolverConfig,
    t_max: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Quantile { eps, reason: "level must lie in (0, 1)".into() });
    }
    let (lo, hi) = fkpp_domain(y, t_max, env.es(), (0.0, 0.0), config.dx);
    let run = FkppRun::heaviside(y, lo, hi, vec![t_max]).with_config(*config).with_probe(0.0);
    let sol = solve_fkpp(env, dist, &run)?;
    first_passage_time(&sol.probe_trace, eps)
        .ok_or_else(|| Error::HorizonExhausted(format!("w^{y}(t, 0) stays below {eps} up to t = {t_max}")))
}

fn first_passage_time(trace: &[(f64, f64)], level: f64) -> Option<f64> {
    let i = trace.iter().position(|p| p.1 >= level)?;
    if i == 0 {
        return Some(trace[0].0);
    }
    let ((t0, v0), (t1, v1)) = (trace[i - 1], trace[i]);
    Some(t0 + (level - v0) / (v1 - v0) * (t1 - t0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossings {
    pub count: usize,
    pub locations: Vec<f64>,
}

/// Sign changes of `f` after values with `|f| <= deadband` are set to zero.
pub fn zero_crossings(f: &GridFunction, deadband: f64) -> Crossings {
    let mut locations = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for (i, &v) in f.values.iter().enumerate() {
        if v.abs() <= deadband {
            continue;
        }
        if let Some((j, u)) = last {
            if (u > 0.0) != (v > 0.0) {
                let (xa, xb) = (f.x(j), f.x(i));
                locations.push(xa + u / (u - v) * (xb - xa));
            }
        }
        last = Some((i, v));
    }
    Crossings { count: locations.len(), locations }
}

/// Diameter of `{x : w(x) in [eps, 1 - eps]}` for the piecewise-linear
/// interpolant, taken between the outermost level crossings around the
/// nodes in the set. No node in the set gives zero.
pub fn front_width(w: &GridFunction, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return invalid(format!("front width needs eps in (0, 1/2), got {eps}"));
    }
    let inside = |v: f64| v >= eps && v <= 1.0 - eps;
    let (Some(first), Some(last)) =
        (w.values.iter().position(|v| inside(*v)), w.values.iter().rposition(|v| inside(*v)))
    else {
        return Ok(0.0);
    };
    let edge = |a: usize, b: usize| {
        let (va, vb) = (w.values[a], w.values[b]);
        let level = if va < eps {
            eps
        } else if va > 1.0 - eps {
            1.0 - eps
        } else {
            return w.x(b);
        };
        w.x(a) + (level - va) / (vb - va) * (w.x(b) - w.x(a))
    };
    let left = if first == 0 { w.x(0) } else { edge(first - 1, first) };
    let right = if last + 1 == w.len() { w.x(last) } else { edge(last + 1, last) };
    Ok(right - left)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SturmianReport {
    pub times: Vec<f64>,
    pub counts: Vec<usize>,
    pub locations: Vec<Vec<f64>>,
    pub deadband: f64,
    /// Step-halving estimate of the solver error in `W`, when computed.
    pub error_estimate: Option<f64>,
}

impl SturmianReport {
    /// Steps where the count rises plus slices with more than one crossing.
    pub fn violations(&self) -> usize {
        let rises = self.counts.windows(2).filter(|w| w[1] > w[0]).count();
        rises + self.counts.iter().filter(|c| **c > 1).count()
    }
}

fn difference_slices(
    env: &Environment,
    dist: &OffspringDistribution,
    y1: f64,
    y2: f64,
    shift: f64,
    t_grid: &[f64],
    (lo, hi): (f64, f64),
    config: &SolverConfig,
) -> Result<Vec<GridFunction>> {
    let later: Vec<f64> = t_grid.iter().map(|t| t + shift).collect();
    let s1 = solve_fkpp(env, dist, &FkppRun::heaviside(y1, lo, hi, t_grid.to_vec()).with_config(*config))?;
    let s2 = solve_fkpp(env, dist, &FkppRun::heaviside(y2, lo, hi, later).with_config(*config))?;
    s1.snapshots.iter().zip(&s2.snapshots).map(|(u, v)| u.minus(v)).collect()
}

/// Crossing counts of `W(t, .) = w^{y1}(t, .) - w^{y2}(t + shift, .)` over
/// `t_grid`. Without an explicit deadband, ten times a step-halving error
/// estimate (grid and step both halved) is used.
pub fn sturmian_check(
    env: &Environment,
    dist: &OffspringDistribution,
    y1: f64,
    y2: f64,
    shift: f64,
    t_grid: &[f64],
    deadband: Option<f64>,
    config: &SolverConfig,
) -> Result<SturmianReport> {
    if !(y1 <= y2) || !(shift >= 0.0) {
        return invalid("sturmian check needs y1 <= y2 and a non-negative time shift");
    }
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let a = fkpp_domain(y1, t_end + shift, env.es(), (0.0, 0.0), config.dx);
    let b = fkpp_domain(y2, t_end + shift, env.es(), (0.0, 0.0), config.dx);
    let domain = (a.0.min(b.0), a.1.max(b.1));
    let coarse = difference_slices(env, dist, y1, y2, shift, t_grid, domain, config)?;
    let (deadband, error_estimate) = match deadband {
        Some(d) if d >= 0.0 => (d, None),
        Some(d) => return invalid(format!("deadband must be >= 0, got {d}")),
        None => {
            let fine_cfg = SolverConfig { dx: 0.5 * config.dx, dt: 0.5 * config.dt, ..*config };
            let fine = difference_slices(env, dist, y1, y2, shift, t_grid, domain, &fine_cfg)?;
            let mut est: f64 = 0.0;
            for (c, f) in coarse.iter().zip(&fine) {
                for i in 0..c.len() {
                    est = est.max((c.values[i] - f.eval(c.x(i))?).abs());
                }
            }
            (10.0 * est, Some(est))
        }
    };
    let crossings: Vec<Crossings> = coarse.iter().map(|w| zero_crossings(w, deadband)).collect();
    Ok(SturmianReport {
        times: t_grid.to_vec(),
        counts: crossings.iter().map(|c| c.count).collect(),
        locations: crossings.into_iter().map(|c| c.locations).collect(),
        deadband,
        error_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveReport {
    pub y_list: Vec<f64>,
    pub taus: Vec<f64>,
    /// `d[i][j] = sup |w^{y_i}(tau_i + s, x) - w^{y_j}(tau_j + s, x)|` over window and shifts.
    pub d: Vec<Vec<f64>>,
    /// Largest violation of `w^{y_i}(tau_i, x) <= w^{y_j}(tau_j, x)` for `x < 0`
    /// and of the reverse order for `x > 0`, over consecutive pairs.
    pub ordering_violation: f64,
}

impl WaveReport {
    /// `D(y_i, y_max)` for each `y_i`.
    pub fn distance_to_last(&self) -> Vec<f64> {
        let last = self.d.len() - 1;
        self.d.iter().map(|row| row[last]).collect()
    }
}

/// Profiles recentred at the temporal quantiles `tau_y^eps`.
pub fn wave_profile_convergence(
    env: &Environment,
    dist: &OffspringDistribution,
    y_list: &[f64],
    eps: f64,
    window: (f64, f64),
    s_grid: &[f64],
    config: &SolverConfig,
    t_max: f64,
) -> Result<WaveReport> {
    if y_list.is_empty() || y_list.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("y list must be strictly increasing");
    }
    if s_grid.iter().any(|s| !(*s >= 0.0)) || s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("shift grid must be increasing and non-negative");
    }
    let s_max = s_grid.last().copied().unwrap_or(0.0);
    let nodes: Vec<f64> = {
        let i0 = (window.0 / config.dx).ceil() as i64;
        let i1 = (window.1 / config.dx).floor() as i64;
        (i0..=i1).map(|i| i as f64 * config.dx).collect()
    };
    let per_y = y_list
        .par_iter()
        .map(|&y| {
            let tau = temporal_quantile(env, dist, y, eps, config, t_max)?;
            let mut times = vec![tau];
            times.extend(s_grid.iter().map(|s| tau + s));
            let (lo, hi) = fkpp_domain(y, tau + s_max, env.es(), window, config.dx);
            let sol = solve_fkpp(env, dist, &FkppRun::heaviside(y, lo, hi, times).with_config(*config))?;
            let profiles = sol
                .snapshots
                .iter()
                .map(|g| nodes.iter().map(|x| g.eval(*x)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok((tau, profiles))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = y_list.len();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut sup: f64 = 0.0;
            for k in 1..per_y[i].1.len() {
                for (a, b) in per_y[i].1[k].iter().zip(&per_y[j].1[k]) {
                    sup = sup.max((a - b).abs());
                }
            }
            d[i][j] = sup;
        }
    }
    let mut ordering_violation: f64 = 0.0;
    for i in 0..m.saturating_sub(1) {
        let (lo, hi) = (&per_y[i].1[0], &per_y[i + 1].1[0]);
        for (k, x) in nodes.iter().enumerate() {
            let diff = lo[k] - hi[k];
            if *x < 0.0 {
                ordering_violation = ordering_violation.max(diff);
            } else if *x > 0.0 {
                ordering_violation = ordering_violation.max(-diff);
            }
        }
    }
    Ok(WaveReport { y_list: y_list.to_vec(), taus: per_y.iter().map(|p| p.0).collect(), d, ordering_violation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub v: f64,
    pub t: f64,
    /// `[ln u_{2t}(2t, 0) - ln u_t(t, 0)] / t`.
    pub lambda: f64,
    /// `ln u_t(t, 0) / t`.
    pub naive_t: f64,
    /// `ln u_{2t}(2t, 0) / (2t)`.
    pub naive_2t: f64,
    pub gap: f64,
}

/// `ln u(s, 0)` for the PAM with initial datum `1_{[v s, inf)}`.
fn log_pam_at_origin(env: &Environment, v: f64, s: f64, config: &SolverConfig) -> Result<f64> {
    let dx = config.dx;
    let margin = guard_width(s) + (46.0 * s).sqrt();
    let lo = (-margin / dx).floor() * dx;
    let hi = ((v * s + margin) / dx).ceil() * dx;
    let n = ((hi - lo) / dx).round() as usize + 1;
    let init = heaviside(v * s, lo, dx, n);
    let u = solve_pam_with(env, &init, &[s], config)?;
    Ok(u[0].eval(0.0)?.ln())
}

/// Growth rate of the PAM mass near `v t`. The leading-order estimate uses
/// the increment between horizons `t` and `2t`, which cancels the
/// polynomial prefactor; the two one-horizon values are reported too.
pub fn lyapunov_estimate(env: &Environment, v: f64, t: f64, config: &SolverConfig) -> Result<LyapunovEstimate> {
    if !(v > 0.0) || !(t > 0.0) {
        return invalid("lyapunov estimate needs v > 0 and t > 0");
    }
    let (a, b) = rayon::join(|| log_pam_at_origin(env, v, t, config), || log_pam_at_origin(env, v, 2.0 * t, config));
    let (a, b) = (a?, b?);
    let naive_t = a / t;
    let naive_2t = b / (2.0 * t);
    Ok(LyapunovEstimate { v, t, lambda: (b - a) / t, naive_t, naive_2t, gap: (naive_2t - naive_t).abs() })
}

/// Root of `v -> lambda(v)` by bisection to absolute tolerance `tol`.
pub fn v0_estimate(env: &Environment, t: f64, bracket: (f64, f64), tol: f64, config: &SolverConfig) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(0.0 < lo && lo < hi) {
        return invalid("bracket must satisfy 0 < lo < hi");
    }
    let f = |v: f64| lyapunov_estimate(env, v, t, config).map(|e| e.lambda);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
