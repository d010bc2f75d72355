use super::analytics::QuantileTable;
use super::grid::GridFunction;
use super::solver::{guard_width, Nonlinearity, ROUNDING_SLACK};
use crate::branching::OffspringDistribution;
use crate::env::LatticeEnvironment;
use crate::error::{invalid, Error, Result};
use rayon::prelude::*;

/// Lattice analogue of a Heaviside F-KPP run.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRun {
    pub y: i64,
    pub x_min: i64,
    pub x_max: i64,
    pub snapshots: Vec<f64>,
    pub dt: f64,
    pub probe: i64,
    pub guard_tol: f64,
}

impl LatticeRun {
    /// Run for `w^y` with a window sized by [`lattice_domain`].
    pub fn new(env: &LatticeEnvironment, y: i64, snapshots: Vec<f64>, dt: f64) -> Self {
        let t = snapshots.last().copied().unwrap_or(0.0);
        let (x_min, x_max) = lattice_domain(y, t, env.es(), env.kappa(), (0, 0));
        LatticeRun { y, x_min, x_max, snapshots, dt, probe: 0, guard_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSolution {
    /// `(t, w^y(t, probe))` after every step, starting at `t = 0`.
    pub trace: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub clamp_events: usize,
}

const LOG_TAIL: f64 = 23.0;

/// Smallest `d` with `growth * t + ln P(S_t >= d) <= -LOG_TAIL` for the
/// walk jumping at total rate `kappa`, using the Chernoff bound.
fn walk_margin(t: f64, kappa: f64, growth: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let bound = |d: f64| {
        let th = (d / (kappa * t)).asinh();
        growth * t - th * d + kappa * t * (th.cosh() - 1.0)
    };
    let mut hi = 1.0;
    while bound(hi) > -LOG_TAIL {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) > -LOG_TAIL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Site window for `w^y` up to time `t` including guard bands and `window`.
pub fn lattice_domain(y: i64, t: f64, es: f64, kappa: f64, window: (i64, i64)) -> (i64, i64) {
    let g = guard_width(t).ceil() as i64 + 1;
    let left = y - walk_margin(t, kappa, es).ceil() as i64 - g;
    let right = y + walk_margin(t, kappa, 0.0).ceil() as i64 + g;
    (left.min(window.0 - g), right.max(window.1 + g))
}

fn derivative(w: &[f64], out: &mut [f64], rates: &[f64], half_kappa: f64, f: &Nonlinearity) {
    let n = w.len();
    out[0] = rates[0] * f.eval(w[0].clamp(0.0, 1.0));
    out[n - 1] = rates[n - 1] * f.eval(w[n - 1].clamp(0.0, 1.0));
    for i in 1..n - 1 {
        out[i] = half_kappa * (w[i + 1] + w[i - 1] - 2.0 * w[i]) + rates[i] * f.eval(w[i].clamp(0.0, 1.0));
    }
}

/// RK4 solution of `w_x' = kappa/2 (w_{x+1} + w_{x-1} - 2 w_x) + xi_x F(w_x)`
/// with `w(0) = 1_{x >= y}`; the two edge sites only react.
pub fn solve_lattice_fkpp(
    env: &LatticeEnvironment,
    dist: &OffspringDistribution,
    run: &LatticeRun,
) -> Result<LatticeSolution> {
    if !dist.is_normalized() {
        return invalid("offspring law must have mean two");
    }
    if !(run.dt > 0.0) {
        return invalid("dt must be > 0");
    }
    if run.snapshots.is_empty()
        || run.snapshots.iter().any(|t| !(t.is_finite() && *t >= 0.0))
        || run.snapshots.windows(2).any(|w| w[1] < w[0])
    {
        return invalid("snapshot times must be finite, >= 0 and non-decreasing");
    }
    let kappa = env.kappa();
    if run.dt * (2.0 * kappa + env.es()) > 2.5 {
        return Err(Error::Stability(format!("dt = {} too large for RK4 at kappa = {kappa}", run.dt)));
    }
    if run.probe < run.x_min || run.probe > run.x_max {
        return Err(Error::OutOfDomain { x: run.probe as f64, lo: run.x_min as f64, hi: run.x_max as f64 });
    }
    let t_end = *run.snapshots.last().expect("non-empty");
    let n = (run.x_max - run.x_min + 1) as usize;
    let g = guard_width(t_end).ceil() as usize + 1;
    if 2 * g >= n {
        return invalid("site window cannot hold two guard bands");
    }
    if run.y - run.x_min < g as i64 || run.x_max - run.y < g as i64 {
        return Err(Error::BoundaryContamination(format!("initial jump at {} lies inside a guard band", run.y)));
    }
    let rates = (run.x_min..=run.x_max).map(|x| env.rate(x)).collect::<Result<Vec<_>>>()?;
    let f = Nonlinearity::new(dist);
    let hk = 0.5 * kappa;
    let mut w: Vec<f64> = (run.x_min..=run.x_max).map(|x| if x >= run.y { 1.0 } else { 0.0 }).collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let p = (run.probe - run.x_min) as usize;
    let mut trace = vec![(0.0, w[p])];
    let mut snapshots = Vec::new();
    let mut clamp_events = 0;
    let mut t = 0.0;
    for &target in &run.snapshots {
        while target - t > 1e-12 * target.max(1.0) {
            let h = if target - t <= run.dt * (1.0 + 1e-9) { target - t } else { run.dt };
            derivative(&w, &mut k1, &rates, hk, &f);
            for i in 0..n {
                tmp[i] = w[i] + 0.5 * h * k1[i];
            }
            derivative(&tmp, &mut k2, &rates, hk, &f);
            for i in 0..n {
                tmp[i] = w[i] + 0.5 * h * k2[i];
            }
            derivative(&tmp, &mut k3, &rates, hk, &f);
            for i in 0..n {
                tmp[i] = w[i] + h * k3[i];
            }
            derivative(&tmp, &mut k4, &rates, hk, &f);
            for i in 0..n {
                let v = w[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if (v - v.clamp(0.0, 1.0)).abs() > ROUNDING_SLACK {
                    clamp_events += 1;
                }
                w[i] = v.clamp(0.0, 1.0);
            }
            t = if h == target - t { target } else { t + h };
            trace.push((t, w[p]));
        }
        let dev_l = w[..g].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let dev_r = w[n - g..].iter().map(|v| (1.0 - v).abs()).fold(0.0, f64::max);
        if dev_l.max(dev_r) > run.guard_tol {
            return Err(Error::BoundaryContamination(format!(
                "lattice guard band deviates by {:e} at t = {target}",
                dev_l.max(dev_r)
            )));
        }
        snapshots.push(GridFunction { x_lo: run.x_min as f64, dx: 1.0, values: w.clone() });
    }
    Ok(LatticeSolution { trace, times: run.snapshots.clone(), snapshots, clamp_events })
}

/// `P_0(M(t) >= y)` for integer `y` over `t_grid`, one solve per `y`.
pub fn lattice_quantile_table(
    env: &LatticeEnvironment,
    dist: &OffspringDistribution,
    y_grid: &[i64],
    t_grid: &[f64],
    dt: f64,
) -> Result<QuantileTable> {
    let columns = y_grid
        .par_iter()
        .map(|&y| {
            let run = LatticeRun::new(env, y, t_grid.to_vec(), dt);
            let sol = solve_lattice_fkpp(env, dist, &run)?;
            Ok(sol.snapshots.iter().map(|s| s.values[(0 - run.x_min) as usize]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let y: Vec<f64> = y_grid.iter().map(|v| *v as f64).collect();
    QuantileTable::from_columns(t_grid.to_vec(), y, &columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_trace_is_indicator() {
        let env = LatticeEnvironment::constant(1.0, 1.0, -200, 200).unwrap();
        let d = OffspringDistribution::binary();
        let run = LatticeRun::new(&env, 5, vec![0.0], 0.01);
        let sol = solve_lattice_fkpp(&env, &d, &run).unwrap();
        assert_eq!(sol.trace, vec![(0.0, 0.0)]);
    }

    #[test]
    fn trace_is_monotone_in_time() {
        let env = LatticeEnvironment::constant(1.0, 1.0, -200, 200).unwrap();
        let d = OffspringDistribution::binary();
        let run = LatticeRun::new(&env, 4, vec![1.0, 3.0], 0.01);
        let sol = solve_lattice_fkpp(&env, &d, &run).unwrap();
        assert!(sol.trace.windows(2).all(|p| p[1].1 >= p[0].1 - 1e-15));
        assert_eq!(sol.clamp_events, 0);
    }

    #[test]
    fn margin_covers_growth() {
        let m = walk_margin(10.0, 1.0, 1.0);
        let th = (m / 10.0f64).asinh();
        assert!(10.0 - th * m + 10.0 * (th.cosh() - 1.0) <= -LOG_TAIL + 1e-6);
        assert!(walk_margin(10.0, 1.0, 0.0) < m);
    }
}
