//! Crossing counts of `W = w^{y1}(t, .) - w^{y2}(t + shift, .)` and
//! convergence of the recentred profiles.
//!
//! Tables:
//! - `sturmian_counts` (env, t, count)
//! - `sturmian_envs` (env, deadband, error_estimate, violations)
//! - `wave_distances` (env, y, tau, distance, ordering_violation), where
//!   `distance` is `D(y, y_max)`
//! - `finite_time` (env, y, tau_eps, tau_high, gap): first times with
//!   `w^y(t, 0) >= finite_time_eps` and `>= 1 - finite_time_eps / 2`. The
//!   largest gap over `y` is an empirical value of the a.s. finite time
//!   after which the solution at the origin is close to 1. Reported only.

use crate::config::{key, Key};
use crate::error::Result;
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::branching::OffspringDistribution;
use bbmre::env::{sample_environment, EnvSpec};
use bbmre::pde::{sturmian_check, temporal_quantile, wave_profile_convergence, SolverConfig};

pub const KEYS: &[Key] = &[
    key("ei", "0.5", "lower edge of the uniform knot law"),
    key("es", "1.5", "upper edge of the uniform knot law"),
    key("envs", "20", "environments of the crossing check (seeds 0, 1, ...)"),
    key("half_window", "120.0", "environment window of the crossing check"),
    key("y1", "0.0", "level of the earlier solution"),
    key("y2", "2.0", "level of the later solution"),
    key("shift", "3.0", "time shift of the later solution"),
    key("slices", "50", "time slices"),
    key("slice_dt", "0.2", "spacing of the slices, the first at t = 0"),
    key("wave_envs", "5", "environments of the wave check (seeds 0, 1, ...)"),
    key("wave_half_window", "300.0", "environment window of the wave check"),
    key("wave_y", "[10.0, 20.0, 30.0, 40.0]", "levels of the recentred profiles"),
    key("wave_eps", "0.5", "temporal quantile used for recentring"),
    key("wave_s", "[1.0, 2.0, 3.0, 4.0, 5.0]", "shifts after the temporal quantile"),
    key("wave_window", "10.0", "profiles are compared on [-wave_window, wave_window]"),
    key("wave_t_max", "80.0", "horizon for the temporal quantiles"),
    key("finite_time_eps", "0.1", "level of the reported finite-time gap"),
    key("ordering_tol", "1e-6", "tolerance on the ordering in y"),
    key("dx", "0.1", "solver grid spacing"),
    key("dt", "0.01", "solver time step"),
];

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let d = OffspringDistribution::binary();
    let cfg = SolverConfig::default().with_grid(c.f64("dx")?, c.f64("dt")?);
    let (ei, es) = (c.f64("ei")?, c.f64("es")?);
    let (y1, y2, shift) = (c.f64("y1")?, c.f64("y2")?, c.f64("shift")?);
    let slice_dt = c.f64("slice_dt")?;
    let slices: Vec<f64> = (0..c.usize("slices")?).map(|i| slice_dt * i as f64).collect();
    let hw = c.f64("half_window")?;

    let mut counts = Table::new(&["env", "t", "count"]);
    let mut per_env = Table::new(&["env", "deadband", "error_estimate", "violations"]);
    let mut bad = Vec::new();
    for s in 0..c.u64("envs")? {
        run.fixed_stage(&format!("crossing environment {s}"), s);
        let env = sample_environment(&EnvSpec::uniform_iid(ei, es, -hw, hw), s)?;
        let r = sturmian_check(&env, &d, y1, y2, shift, &slices, None, &cfg)?;
        for (t, n) in r.times.iter().zip(&r.counts) {
            counts.push(vec![s as f64, *t, *n as f64]);
        }
        let v = r.violations();
        per_env.push(vec![s as f64, r.deadband, r.error_estimate.unwrap_or(f64::NAN), v as f64]);
        if v > 0 {
            bad.push(s);
        }
    }
    run.table("sturmian_counts", &counts)?;
    run.table("sturmian_envs", &per_env)?;
    run.check(
        "at most one crossing, never increasing",
        Some(7),
        bad.is_empty(),
        format!("{} environments x {} slices; environments with violations: {bad:?}", c.u64("envs")?, slices.len()),
    );

    let ys = c.f64_list("wave_y")?;
    let s_grid = c.f64_list("wave_s")?;
    let (eps, w, t_max, tol) =
        (c.f64("wave_eps")?, c.f64("wave_window")?, c.f64("wave_t_max")?, c.f64("ordering_tol")?);
    let whw = c.f64("wave_half_window")?;
    let t_eps = c.f64("finite_time_eps")?;
    let mut wave = Table::new(&["env", "y", "tau", "distance", "ordering_violation"]);
    let mut gaps = Table::new(&["env", "y", "tau_eps", "tau_high", "gap"]);
    let mut plot = Plot::new("Distance of recentred profiles to the last level", "y", "D(y, y_max)");
    for s in 0..c.u64("wave_envs")? {
        run.fixed_stage(&format!("wave environment {s}"), s);
        let env = sample_environment(&EnvSpec::uniform_iid(ei, es, -whw, whw), s)?;
        let r = wave_profile_convergence(&env, &d, &ys, eps, (-w, w), &s_grid, &cfg, t_max)?;
        let dist = r.distance_to_last();
        for k in 0..ys.len() {
            wave.push(vec![s as f64, ys[k], r.taus[k], dist[k], r.ordering_violation]);
        }
        run.check(
            &format!("environment {s}: profiles converge"),
            Some(9),
            dist.windows(2).all(|p| p[1] < p[0]),
            format!("D(y, y_max) = {}", super::fmt_list(&dist)),
        );
        run.check(
            &format!("environment {s}: profiles ordered in y"),
            Some(9),
            r.ordering_violation <= tol,
            format!("largest violation {:.3e} (tolerance {tol:e})", r.ordering_violation),
        );
        plot = plot.curve(Curve::new(&format!("environment {s}"), &ys, &dist));
        for y in &ys {
            let lo = temporal_quantile(&env, &d, *y, t_eps, &cfg, t_max)?;
            let hi = temporal_quantile(&env, &d, *y, 1.0 - 0.5 * t_eps, &cfg, t_max)?;
            gaps.push(vec![s as f64, *y, lo, hi, hi - lo]);
        }
    }
    run.table("wave_distances", &wave)?;
    run.table("finite_time", &gaps)?;
    run.plot("wave_distances", &plot)
}
