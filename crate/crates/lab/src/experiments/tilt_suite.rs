//! The tilted measure: normaliser, drift bounds, Girsanov, calibration,
//! comparison with constant drifts, and the Monte Carlo functionals.
//!
//! Random environments have i.i.d. uniform knots on `[ei, es]`; seed `i`
//! is environment `i`. Tables:
//! - `tilt_normaliser` (alpha, d, log_z, exact, rel_error)
//! - `tilt_drift_bounds` (env, eta, b_min, b_max, lower, upper, max_residual, step)
//! - `tilt_girsanov` (env, ks, threshold, ess, mean_weight, mean_weight_se, z), env -1 is flat
//! - `tilt_calibration` (env, v, eta, mean_time, target, rel_error), env -1 is constant
//! - `tilt_dominance` (env, eta, t, band, slow_excess, fast_excess)
//! - `tilt_hitting_time` (dt, mc_mean, mc_se, exact)
//! - `tilt_hitting_samples` (replicate, h, censored) at the smallest step
//! - `tilt_y_ratio` (x, y, eta, ratio, ratio_se)
//! - `tilt_barrier` (env, hit, early, late, after_early_barrier)

use crate::config::{key, Key};
use crate::error::{Error, Result};
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::env::{sample_environment, EnvSpec, Environment};
use bbmre::stats;
use bbmre::tilt::{
    barrier_event_stats, calibrate_eta, default_dt, dominance_check, eta_bar, girsanov_crosscheck, log_z, solve_b,
    tilted_hitting_samples, v1_v2, y_functionals, BarrierParams, Calibration, SolveOptions, BOUND_TOL,
};

pub const KEYS: &[Key] = &[
    key("ei", "0.5", "lower edge of the uniform knot law"),
    key("es", "1.5", "upper edge of the uniform knot law"),
    key("half_window", "150.0", "environment window"),
    key("alphas", "[0.25, 0.5, 2.0]", "tilts of the constant-potential normaliser"),
    key("distances", "[1.0, 5.0]", "distances of the constant-potential normaliser"),
    key("normaliser_tol", "1e-4", "relative tolerance on the normaliser"),
    key("bound_envs", "10", "environments of the drift-bound check"),
    key("eta_min", "-4.0", "most negative tilt of the drift-bound check"),
    key("eta_max", "-0.2", "least negative tilt of the drift-bound check"),
    key("girsanov_envs", "[2, 5]", "random environments of the Girsanov check"),
    key("girsanov_paths", "5000", "paths on each side"),
    key("girsanov_y", "2.0", "target level, started from 0"),
    key("weight_se", "3.0", "standard errors allowed between mean weight and normaliser"),
    key("constant_speeds", "[1.0, 2.0]", "speeds calibrated on the constant potential"),
    key("calibration_tol", "1e-3", "relative tolerance of the constant-potential calibration"),
    key("calibration_envs", "3", "random environments of the calibration check"),
    key("speeds", "[1.5, 2.5, 4.0]", "speeds calibrated on random environments"),
    key("residual_tol", "1e-4", "relative tolerance of the definitional residual"),
    key("dominance_etas", "[-0.5, -1.0, -2.0]", "tilts cycled over the dominance triples"),
    key("dominance_times", "[2.0, 5.0, 8.0]", "times cycled over the dominance triples"),
    key("dominance_triples", "10", "number of (environment, tilt, time) triples"),
    key("dominance_paths", "10000", "paths per triple"),
    key("hitting_env", "6", "environment of the mean-hitting-time check"),
    key("hitting_y", "5.0", "target of the mean-hitting-time check"),
    key("hitting_paths", "10000", "paths per step size"),
    key("hitting_dts", "[0.002, 0.001]", "step sizes of the mean-hitting-time check"),
    key("y_env", "3", "environment of the translation check"),
    key("y_shifts", "[0.0, 10.0, 20.0, 30.0, 40.0]", "starting points of the translation check"),
    key("y_paths", "10000", "paths per starting point"),
    key("barrier_envs", "10", "environments of the barrier check"),
    key("barrier_paths", "4000", "paths per environment"),
    key("dt", "0.001", "Euler step of the tilted diffusion"),
];

fn random_env(run: &mut Run<'_>, seed: u64, hw: f64) -> Result<Environment> {
    let c = run.config;
    let spec = EnvSpec::uniform_iid(c.f64("ei")?, c.f64("es")?, -hw, hw);
    run.fixed_stage(&format!("environment {seed}"), seed);
    Ok(sample_environment(&spec, seed)?)
}

fn normaliser(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let tol = c.f64("normaliser_tol")?;
    let env = Environment::constant(1.0, -150.0, 50.0);
    let mut tab = Table::new(&["alpha", "d", "log_z", "exact", "rel_error"]);
    let mut worst: f64 = 0.0;
    for alpha in c.f64_list("alphas")? {
        let tm = solve_b(&env, -alpha, (0.0, 10.0))?;
        for d in c.f64_list("distances")? {
            let exact = -(2.0 * alpha).sqrt() * d;
            let got = log_z(&tm, 2.0, 2.0 + d)?;
            let rel = ((got - exact) / exact).abs();
            worst = worst.max(rel);
            tab.push(vec![alpha, d, got, exact, rel]);
        }
    }
    run.table("tilt_normaliser", &tab)?;
    run.check("constant-potential normaliser", Some(3), worst <= tol, format!("largest relative error {worst:.2e}"));
    Ok(())
}

fn drift_bounds(run: &mut Run<'_>, hw: f64) -> Result<()> {
    let c = run.config;
    let n = c.u64("bound_envs")?;
    let (e0, e1) = (c.f64("eta_min")?, c.f64("eta_max")?);
    let mut tab = Table::new(&["env", "eta", "b_min", "b_max", "lower", "upper", "max_residual", "step"]);
    let mut failures = Vec::new();
    for s in 0..n {
        let eta = if n > 1 { e0 + (e1 - e0) * s as f64 / (n - 1) as f64 } else { e0 };
        let env = random_env(run, s, hw)?;
        let tm = solve_b(&env, eta, (-10.0, 30.0))?;
        let b = tm.b_table().values;
        let (b_min, b_max) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), v| (a.min(*v), z.max(*v)));
        let lower = (2.0 * eta.abs()).sqrt();
        let upper = (2.0 * (env.es() - env.ei() + eta.abs())).sqrt();
        let h = tm.step();
        tab.push(vec![s as f64, eta, b_min, b_max, lower, upper, tm.max_residual(), h]);
        if b_min < lower - BOUND_TOL || b_max > upper + BOUND_TOL || tm.max_residual() > 10.0 * h * h {
            failures.push(s);
        }
    }
    run.table("tilt_drift_bounds", &tab)?;
    run.check(
        "drift bounds and Riccati residual",
        Some(4),
        failures.is_empty(),
        format!("{n} environments, tilts in [{e0}, {e1}]; failing environments {failures:?}"),
    );
    Ok(())
}

fn girsanov(run: &mut Run<'_>, hw: f64) -> Result<()> {
    let c = run.config;
    let (n, y, dt, k) = (c.usize("girsanov_paths")?, c.f64("girsanov_y")?, c.f64("dt")?, c.f64("weight_se")?);
    let mut tab = Table::new(&["env", "ks", "threshold", "ess", "mean_weight", "mean_weight_se", "z"]);
    // Path seeds: 1 for the flat case, else the environment seed.
    let mut cases: Vec<(f64, u64, Environment)> = vec![(-1.0, 1, Environment::constant(1.0, -hw, hw))];
    for s in c.u64_list("girsanov_envs")? {
        cases.push((s as f64, s, random_env(run, s, hw)?));
    }
    let mut failures = Vec::new();
    for (label, seed, env) in cases {
        let tm = solve_b(&env, -1.0, (-40.0, 10.0))?;
        run.fixed_stage(&format!("girsanov paths {label}"), seed);
        let r = girsanov_crosscheck(&tm, 0.0, y, n, dt, seed)?;
        tab.push(vec![label, r.ks, r.threshold, r.ess, r.mean_weight, r.mean_weight_se, r.z]);
        if !(r.ks_passes() && r.weight_within(k)) {
            failures.push(label);
        }
    }
    run.table("tilt_girsanov", &tab)?;
    run.check(
        "Girsanov cross-check",
        Some(5),
        failures.is_empty(),
        format!("flat case and environments {:?}; failing {failures:?}", c.u64_list("girsanov_envs")?),
    );
    Ok(())
}

fn calibration(run: &mut Run<'_>, hw: f64) -> Result<()> {
    let c = run.config;
    let mut tab = Table::new(&["env", "v", "eta", "mean_time", "target", "rel_error"]);
    let flat = Environment::constant(1.0, -hw, hw);
    let tol = c.f64("calibration_tol")?;
    let mut worst: f64 = 0.0;
    for v in c.f64_list("constant_speeds")? {
        let eta = tilt_for(&flat, v)?;
        let exact = -0.5 * v * v;
        let rel = ((eta - exact) / exact).abs();
        worst = worst.max(rel);
        tab.push(vec![-1.0, v, eta, 20.0 / v, 20.0 / v, rel]);
    }
    run.check(
        "calibration on a constant potential",
        Some(6),
        worst <= tol,
        format!("largest relative error of eta against -v^2/2: {worst:.2e}"),
    );
    let res_tol = c.f64("residual_tol")?;
    let mut worst_res: f64 = 0.0;
    for s in 0..c.u64("calibration_envs")? {
        let env = random_env(run, s, hw)?;
        for v in c.f64_list("speeds")? {
            let eta = tilt_for(&env, v)?;
            let m = solve_b(&env, eta, (0.0, 20.0))?.expected_hitting_time(0.0, 20.0)?;
            let target = 20.0 / v;
            let rel = ((m - target) / target).abs();
            worst_res = worst_res.max(rel);
            tab.push(vec![s as f64, v, eta, m, target, rel]);
        }
    }
    run.table("tilt_calibration", &tab)?;
    run.check(
        "calibration residual on random environments",
        Some(6),
        worst_res <= res_tol,
        format!("largest relative residual {worst_res:.2e}"),
    );
    Ok(())
}

fn tilt_for(env: &Environment, v: f64) -> Result<f64> {
    match calibrate_eta(env, 0.0, 20.0, v, SolveOptions::default())? {
        Calibration::Tilt { eta, .. } => Ok(eta),
        Calibration::NoSolution { .. } => Err(Error::Output(format!("no tilt reaches speed {v}"))),
    }
}

fn dominance(run: &mut Run<'_>, hw: f64) -> Result<()> {
    let c = run.config;
    let (etas, times) = (c.f64_list("dominance_etas")?, c.f64_list("dominance_times")?);
    let (n, dt) = (c.usize("dominance_paths")?, c.f64("dt")?);
    let triples = c.u64("dominance_triples")?;
    let mut tab = Table::new(&["env", "eta", "t", "band", "slow_excess", "fast_excess"]);
    let mut failures = Vec::new();
    for s in 0..triples {
        let (eta, t) = (etas[s as usize % etas.len()], times[(s as usize + 1) % times.len()]);
        let env = random_env(run, s, hw)?;
        let tm = solve_b(&env, eta, (-40.0, 40.0))?;
        let seed = run.stage(&format!("dominance {s}"));
        let r = dominance_check(&tm, 0.0, t, n, dt, seed)?;
        tab.push(vec![s as f64, eta, t, r.band, r.slow_excess, r.fast_excess]);
        if !r.ordered() {
            failures.push(s);
        }
    }
    run.table("tilt_dominance", &tab)?;
    run.check(
        "tilted law between the constant-drift laws",
        Some(8),
        failures.is_empty(),
        format!("{triples} triples; failing environments {failures:?}"),
    );
    Ok(())
}

fn hitting_time(run: &mut Run<'_>, hw: f64) -> Result<()> {
    let c = run.config;
    let (y, n) = (c.f64("hitting_y")?, c.usize("hitting_paths")?);
    let env = random_env(run, c.u64("hitting_env")?, hw)?;
    let tm = solve_b(&env, -1.0, (-40.0, 10.0))?;
    let exact = tm.expected_hitting_time(0.0, y)?;
    let mut tab = Table::new(&["dt", "mc_mean", "mc_se", "exact"]);
    let mut last = Vec::new();
    let mut misses = Vec::new();
    for dt in c.f64_list("hitting_dts")? {
        let seed = run.stage(&format!("hitting times, dt {dt}"));
        let samples = tilted_hitting_samples(&tm, 0.0, y, dt, 200.0, n, seed)?;
        let h: Vec<f64> = samples.iter().map(|s| s.h).collect();
        let (m, se) = stats::mean_se(&h);
        tab.push(vec![dt, m, se, exact]);
        if (m - exact).abs() > 3.0 * se || samples.iter().any(|s| s.censored) {
            misses.push(dt);
        }
        last = samples;
    }
    run.table("tilt_hitting_time", &tab)?;
    let mut raw = Table::new(&["replicate", "h", "censored"]);
    for (i, s) in last.iter().enumerate() {
        raw.push(vec![i as f64, s.h, f64::from(u8::from(s.censored))]);
    }
    run.table("tilt_hitting_samples", &raw)?;
    run.check(
        "mean hitting time against the tilted Monte Carlo",
        None,
        misses.is_empty(),
        format!("exact {exact:.4}; step sizes outside 3 SE or censored: {misses:?}"),
    );
    Ok(())
}

fn y_ratio(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let s = c.u64("y_env")?;
    let spec = EnvSpec::uniform_iid(c.f64("ei")?, c.f64("es")?, -150.0, 200.0);
    run.fixed_stage(&format!("environment {s}, window [-150, 200]"), s);
    let env = sample_environment(&spec, s)?;
    let n = c.usize("y_paths")?;
    let v = 2.0;
    let mut tab = Table::new(&["x", "y", "eta", "ratio", "ratio_se"]);
    let mut ratios = Vec::new();
    for x in c.f64_list("y_shifts")? {
        let y = x + 20.0;
        let eta = calibrate_eta(&env, x, y, v, SolveOptions::default())?
            .eta()
            .ok_or_else(|| Error::Output(format!("no tilt from {x} to {y} at speed {v}")))?;
        let tm = solve_b(&env, eta, (x - 30.0, y))?;
        let seed = run.stage(&format!("y functionals from {x}"));
        let r = y_functionals(&tm, x, y, v, 2.0, n, default_dt(eta), seed)?;
        tab.push(vec![x, y, eta, r.ratio, r.ratio_se]);
        ratios.push(r.ratio);
    }
    run.table("tilt_y_ratio", &tab)?;
    let (min, max) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    run.check(
        "window ratio stable under translation",
        None,
        max / min < 2.0,
        format!("ratios {} (max/min {:.3})", super::fmt_list(&ratios), max / min),
    );
    Ok(())
}

fn barrier(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let spec = EnvSpec::uniform_iid(0.5, 1.0, -60.0, 70.0);
    let (v1, v2) = v1_v2(&spec, 200, 7)?;
    let (t, v, k, l, eta): (f64, f64, f64, f64, f64) = (10.0, 5.0, 3.0, 1.0, -10.5);
    let regime = v > v2 && eta > eta_bar(&spec, v, 200, 7)? && (2.0 * eta.abs()).sqrt() > v1 * (1.0 + 2.0 * l / k);
    let n = c.usize("barrier_paths")?;
    let mut tab = Table::new(&["env", "hit", "early", "late", "after_early_barrier"]);
    let mut failures = Vec::new();
    for i in 0..c.u64("barrier_envs")? {
        let s = 100 + i;
        run.fixed_stage(&format!("barrier environment {s}"), s);
        let env = sample_environment(&spec, s)?;
        let tm = solve_b(&env, eta, (-20.0, 50.0))?;
        let seed = run.stage(&format!("barrier paths {s}"));
        let r = barrier_event_stats(&tm, BarrierParams { y: 50.0, t, v, v1, k, l }, n, 2e-3, seed)?;
        tab.push(vec![s as f64, r.hit.p, r.early.p, r.late.p, r.hit_after_early_barrier.p]);
        let ok = r.hit.p > 0.05
            && r.early.hi <= 0.25 * r.hit.lo
            && r.early.hi <= r.late.lo / 3.0
            && r.hit_after_early_barrier.p <= 2.0 * (r.early.p + 3.0 * r.early.se);
        if !ok {
            failures.push(s);
        }
    }
    run.table("tilt_barrier", &tab)?;
    run.check(
        "barrier inequalities",
        None,
        regime && failures.is_empty(),
        format!("v1 {v1:.4}, v2 {v2:.4}, parameters in regime: {regime}; failing environments {failures:?}"),
    );
    Ok(())
}

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let hw = run.config.f64("half_window")?;
    normaliser(run)?;
    drift_bounds(run, hw)?;
    girsanov(run, hw)?;
    calibration(run, hw)?;
    dominance(run, hw)?;
    hitting_time(run, hw)?;
    y_ratio(run)?;
    barrier(run)?;

    let env = random_env(run, 0, hw)?;
    let tm = solve_b(&env, -1.0, (-10.0, 30.0))?;
    let b = tm.b_table();
    let every = (b.len() / 2000).max(1);
    let xs: Vec<f64> = (0..b.len()).step_by(every).map(|i| b.x(i)).collect();
    let bs: Vec<f64> = (0..b.len()).step_by(every).map(|i| b.values[i]).collect();
    let plot = Plot::new("Drift of the tilted measure, eta = -1", "x", "b(x)")
        .curve(Curve::new("b", &xs, &bs))
        .curve(Curve::new("lower bound", &[xs[0], xs[xs.len() - 1]], &[2f64.sqrt(); 2]));
    run.plot("tilt_drift", &plot)
}
