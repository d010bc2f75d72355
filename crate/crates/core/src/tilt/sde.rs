use super::measure::TiltedMeasure;
use crate::env::Environment;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};
use crate::stats;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Outcome of one path run towards a target level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingSample {
    /// Hitting time, or the time horizon when censored.
    pub h: f64,
    pub censored: bool,
    /// First time the path met the moving barrier, if one was set.
    pub barrier: Option<f64>,
    pub weight: f64,
}

/// Linear barrier `beta(s) = y - v1 (t - s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Barrier {
    pub y: f64,
    pub v1: f64,
    pub t: f64,
}

impl Barrier {
    #[inline]
    fn at(&self, s: f64) -> f64 {
        self.y - self.v1 * (self.t - s)
    }
}

/// Probability that a Brownian bridge over time `dt` between two points at
/// distances `a, b > 0` below a level touches it.
#[inline]
fn bridge_cross(a: f64, b: f64, dt: f64) -> f64 {
    (-2.0 * a * b / dt).exp()
}

fn out_of_table(tm: &TiltedMeasure, x: f64) -> Error {
    let (lo, hi) = tm.domain();
    Error::OutOfDomain { x, lo, hi }
}

fn check_step(dt: f64, t_max: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("dt = {dt} must be > 0"));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return invalid(format!("t_max = {t_max} must be finite and >= 0"));
    }
    Ok(())
}

/// Euler-Maruyama run of `dX = b(X) dt + dB` until `X` reaches `y` or time
/// `t_max`; crossings inside a step are detected through the bridge
/// probability, for the target and for the barrier alike.
pub(crate) fn run_to_target(
    tm: &TiltedMeasure,
    x0: f64,
    y: f64,
    barrier: Option<Barrier>,
    dt: f64,
    t_max: f64,
    rng: &mut Stream,
    mut path: Option<&mut Vec<(f64, f64)>>,
) -> Result<HittingSample> {
    let mut x = x0;
    let mut s = 0.0;
    let mut tau = match barrier {
        Some(bar) if x0 >= bar.at(0.0) => Some(0.0),
        _ => None,
    };
    if let Some(p) = path.as_deref_mut() {
        p.push((0.0, x0));
    }
    while s < t_max {
        let step = if t_max - s < dt * (1.0 + 1e-9) { t_max - s } else { dt };
        let b = tm.drift_fast(x).ok_or_else(|| out_of_table(tm, x))?;
        let z: f64 = rng.sample(StandardNormal);
        let xn = x + b * step + step.sqrt() * z;
        let sn = if step == t_max - s { t_max } else { s + step };
        // One uniform serves both checks, so a target crossing always
        // implies a barrier crossing (the barrier sits below the target).
        let (c0, c1) = (y - x, y - xn);
        let p_target = if c1 <= 0.0 { 1.0 } else { bridge_cross(c0, c1, step) };
        let mut p_barrier = 0.0;
        if let (Some(bar), None) = (barrier, tau) {
            let (a0, a1) = (bar.at(s) - x, bar.at(sn) - xn);
            p_barrier = if a1 <= 0.0 { 1.0 } else { bridge_cross(a0, a1, step) };
        }
        let p_max = p_target.max(p_barrier);
        let u: f64 = if p_max > 0.0 && p_max < 1.0 { rng.random() } else { 0.5 };
        if p_barrier >= 1.0 || u < p_barrier {
            tau = Some(sn);
        }
        x = xn;
        s = sn;
        if let Some(p) = path.as_deref_mut() {
            p.push((s, x));
        }
        if p_target >= 1.0 || u < p_target {
            if barrier.is_some() && tau.is_none() {
                tau = Some(s);
            }
            return Ok(HittingSample { h: s, censored: false, barrier: tau, weight: 1.0 });
        }
    }
    Ok(HittingSample { h: t_max, censored: true, barrier: tau, weight: 1.0 })
}

fn check_start(tm: &TiltedMeasure, x0: f64, y: f64) -> Result<()> {
    let (lo, hi) = tm.domain();
    if !(x0 < y) {
        return invalid(format!("start {x0} must lie left of the target {y}"));
    }
    for v in [x0, y] {
        if v < lo || v > hi + 1e-9 * tm.step() {
            return Err(Error::OutOfDomain { x: v, lo, hi });
        }
    }
    Ok(())
}

/// One tilted path from `x0` stopped at `H_y` or `t_max`.
pub fn simulate_tilted(tm: &TiltedMeasure, x0: f64, y: f64, dt: f64, seed: u64, t_max: f64) -> Result<HittingSample> {
    check_step(dt, t_max)?;
    check_start(tm, x0, y)?;
    run_to_target(tm, x0, y, None, dt, t_max, &mut rng::stream(seed, 0), None)
}

/// As [`simulate_tilted`], also returning the visited `(t, x)` pairs.
pub fn simulate_tilted_path(
    tm: &TiltedMeasure,
    x0: f64,
    y: f64,
    dt: f64,
    seed: u64,
    t_max: f64,
) -> Result<(HittingSample, Vec<(f64, f64)>)> {
    check_step(dt, t_max)?;
    check_start(tm, x0, y)?;
    let mut path = Vec::new();
    let s = run_to_target(tm, x0, y, None, dt, t_max, &mut rng::stream(seed, 0), Some(&mut path))?;
    Ok((s, path))
}

/// `n` independent tilted hitting samples; replicate `i` uses stream `i`.
pub fn tilted_hitting_samples(
    tm: &TiltedMeasure,
    x0: f64,
    y: f64,
    dt: f64,
    t_max: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<HittingSample>> {
    check_step(dt, t_max)?;
    check_start(tm, x0, y)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| run_to_target(tm, x0, y, None, dt, t_max, &mut rng::stream(seed, i), None))
        .collect()
}

/// Plain Brownian paths from `x0` run to `H_y`, each carrying the weight
/// `exp(int_0^{H_y} (zeta + eta))`. Paths whose log-weight drops below
/// `log_floor`, or which leave the environment, are censored with weight 0.
pub fn weighted_brownian_hits(
    env: &Environment,
    eta: f64,
    x0: f64,
    y: f64,
    dt: f64,
    log_floor: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<HittingSample>> {
    check_step(dt, 0.0)?;
    if !(eta <= 0.0) || !(x0 < y) {
        return invalid("weighted Brownian hits need eta <= 0 and x0 < y");
    }
    env.check_domain(x0)?;
    env.check_domain(y)?;
    let es = env.es();
    let (lo, _) = env.domain();
    let phi = |x: f64| env.eval_unchecked(x) - es + eta;
    let sq = dt.sqrt();
    let run = |i: u64| {
        let mut rng = rng::stream(seed, i);
        let (mut x, mut s, mut lw) = (x0, 0.0, 0.0);
        let mut f0 = phi(x);
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let xn = x + sq * z;
            let (c0, c1) = (y - x, y - xn);
            let hit = c1 <= 0.0 || {
                let p = bridge_cross(c0, c1, dt);
                p > 0.0 && rng.random::<f64>() < p
            };
            if xn < lo {
                return HittingSample { h: s + dt, censored: true, barrier: None, weight: 0.0 };
            }
            let f1 = phi(xn.min(y));
            lw += 0.5 * dt * (f0 + f1);
            s += dt;
            if hit {
                return HittingSample { h: s, censored: false, barrier: None, weight: lw.exp() };
            }
            if lw < log_floor {
                return HittingSample { h: s, censored: true, barrier: None, weight: 0.0 };
            }
            x = xn;
            f0 = f1;
        }
    };
    Ok((0..n as u64).into_par_iter().map(run).collect())
}

/// Tilted-SDE versus reweighted-Brownian hitting laws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GirsanovReport {
    /// Weighted two-sample KS distance between the two `H_y` laws.
    pub ks: f64,
    /// KS acceptance threshold at level 1% for the sample sizes used.
    pub threshold: f64,
    pub ess: f64,
    /// Mean Brownian path weight, an estimate of `Z_{x,y}`.
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    /// `exp(log_Z(x, y))` from the drift table.
    pub z: f64,
    pub censored_tilted: usize,
    pub censored_brownian: usize,
}

impl GirsanovReport {
    pub fn ks_passes(&self) -> bool {
        self.ks <= self.threshold
    }
    /// Mean weight within `k` standard errors of the table normaliser.
    pub fn weight_within(&self, k: f64) -> bool {
        (self.mean_weight - self.z).abs() <= k * self.mean_weight_se
    }
}

pub const MIN_ESS: f64 = 100.0;

/// Compares the `H_y` law of the tilted SDE with the law of Brownian paths
/// reweighted by `exp(int (zeta + eta)) / Z_{x,y}`, `n` paths on each side.
pub fn girsanov_crosscheck(tm: &TiltedMeasure, x: f64, y: f64, n: usize, dt: f64, seed: u64) -> Result<GirsanovReport> {
    let log_z = tm.log_z(x, y)?;
    let t_max = 50.0 * tm.expected_hitting_time(x, y)? + 100.0;
    let tilted = tilted_hitting_samples(tm, x, y, dt, t_max, n, rng::derive_seed(seed, 1))?;
    let floor = log_z - 30.0;
    let bm = weighted_brownian_hits(tm.env(), tm.eta(), x, y, dt, floor, n, rng::derive_seed(seed, 2))?;
    let weights: Vec<f64> = bm.iter().map(|s| s.weight).collect();
    let ess = stats::effective_sample_size(&weights);
    if ess < MIN_ESS {
        return Err(Error::EffectiveSampleSize { ess, min: MIN_ESS });
    }
    let (mean_weight, mean_weight_se) = stats::mean_se(&weights);
    let a: Vec<(f64, f64)> = tilted.iter().filter(|s| !s.censored).map(|s| (s.h, 1.0)).collect();
    let b: Vec<(f64, f64)> = bm.iter().filter(|s| s.weight > 0.0).map(|s| (s.h, s.weight)).collect();
    let ks = stats::ks_weighted(&a, &b);
    Ok(GirsanovReport {
        ks,
        threshold: stats::ks_critical(0.01, a.len() as f64, ess),
        ess,
        mean_weight,
        mean_weight_se,
        z: log_z.exp(),
        censored_tilted: tilted.iter().filter(|s| s.censored).count(),
        censored_brownian: bm.iter().filter(|s| s.censored).count(),
    })
}

/// Positions of `n` tilted paths from `x0` at each of the increasing
/// `times`, indexed `[time][replicate]`.
pub fn tilted_positions(
    tm: &TiltedMeasure,
    x0: f64,
    times: &[f64],
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return invalid("times must be non-empty, >= 0 and non-decreasing");
    }
    check_step(dt, *times.last().expect("non-empty"))?;
    if tm.drift_fast(x0).is_none() {
        return Err(out_of_table(tm, x0));
    }
    let per_rep: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let (mut x, mut s) = (x0, 0.0);
            let mut out = Vec::with_capacity(times.len());
            for &target in times {
                while target - s > 1e-12 * target.max(1.0) {
                    let step = if target - s < dt * (1.0 + 1e-9) { target - s } else { dt };
                    let b = tm.drift_fast(x).ok_or_else(|| out_of_table(tm, x))?;
                    let z: f64 = rng.sample(StandardNormal);
                    x += b * step + step.sqrt() * z;
                    s = if step == target - s { target } else { s + step };
                }
                out.push(x);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..times.len()).map(|k| per_rep.iter().map(|r| r[k]).collect()).collect())
}

/// Empirical check of the drift comparison at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominanceReport {
    pub t: f64,
    pub n: usize,
    /// Simultaneous DKW half-width at level 1%.
    pub band: f64,
    /// `sup_z (F_hat(z) - F_slow(z))`, with `F_slow` the law under drift `sqrt(2|eta|)`.
    pub slow_excess: f64,
    /// `sup_z (F_fast(z) - F_hat(z))`, with `F_fast` the law under the upper drift bound.
    pub fast_excess: f64,
}

impl DominanceReport {
    pub fn ordered(&self) -> bool {
        self.slow_excess <= self.band && self.fast_excess <= self.band
    }
}

/// Checks `P^{slow}(X_t <= .) >= P^{tilt}(X_t <= .) >= P^{fast}(X_t <= .)`
/// on `n` tilted paths from `x0`.
pub fn dominance_check(tm: &TiltedMeasure, x0: f64, t: f64, n: usize, dt: f64, seed: u64) -> Result<DominanceReport> {
    if n == 0 {
        return invalid("need at least one path");
    }
    let band = stats::dkw_epsilon(n, 0.01);
    if t == 0.0 {
        return Ok(DominanceReport { t, n, band, slow_excess: 0.0, fast_excess: 0.0 });
    }
    let mut xs = tilted_positions(tm, x0, &[t], dt, n, seed)?.remove(0);
    xs.sort_by(f64::total_cmp);
    let sd = t.sqrt();
    let (vs, vf) = (tm.lower_speed(), tm.upper_speed());
    let f_slow = |z: f64| stats::normal_cdf((z - x0 - vs * t) / sd);
    let f_fast = |z: f64| stats::normal_cdf((z - x0 - vf * t) / sd);
    let nf = n as f64;
    let (mut slow_excess, mut fast_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, &z) in xs.iter().enumerate() {
        let (below, at) = (i as f64 / nf, (i + 1) as f64 / nf);
        slow_excess = slow_excess.max(at - f_slow(z));
        fast_excess = fast_excess.max(f_fast(z) - below);
    }
    Ok(DominanceReport { t, n, band, slow_excess, fast_excess })
}

#[cfg(test)]
mod tests {
    use super::super::measure::{solve_b, solve_b_with, SolveOptions};
    use super::*;

    fn flat(eta: f64) -> TiltedMeasure {
        let env = Environment::constant(1.0, -80.0, 80.0);
        solve_b_with(&env, eta, (-30.0, 40.0), SolveOptions { h: 1e-2, burn_in: Some(1.0) }).unwrap()
    }

    #[test]
    fn constant_drift_hitting_moments() {
        let tm = flat(-0.5);
        let s = tilted_hitting_samples(&tm, 0.0, 5.0, 1e-3, 200.0, 4000, 9).unwrap();
        assert!(s.iter().all(|v| !v.censored && v.barrier.is_none()));
        let h: Vec<f64> = s.iter().map(|v| v.h).collect();
        let (m, se) = stats::mean_se(&h);
        assert!((m - 5.0).abs() < 3.0 * se, "{m} {se}");
        assert!((stats::variance(&h) / 5.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn reproducible_under_seed() {
        let tm = flat(-0.5);
        let a = simulate_tilted(&tm, 0.0, 3.0, 1e-3, 4, 100.0).unwrap();
        let b = simulate_tilted(&tm, 0.0, 3.0, 1e-3, 4, 100.0).unwrap();
        assert_eq!(a, b);
        let (c, path) = simulate_tilted_path(&tm, 0.0, 3.0, 1e-3, 4, 100.0).unwrap();
        assert_eq!(a, c);
        assert_eq!(path.last().unwrap().0, c.h);
    }

    #[test]
    fn censoring_is_reported() {
        let tm = flat(-0.5);
        let s = simulate_tilted(&tm, 0.0, 30.0, 1e-2, 1, 1.0).unwrap();
        assert!(s.censored);
        assert_eq!(s.h, 1.0);
    }

    #[test]
    fn barrier_precedes_target() {
        let tm = flat(-8.0);
        let bar = Barrier { y: 20.0, v1: 2.0, t: 5.0 };
        for i in 0..200 {
            let s = run_to_target(&tm, 20.0 - 25.0, 20.0, Some(bar), 1e-3, 5.0, &mut rng::stream(2, i), None).unwrap();
            if !s.censored {
                assert!(s.barrier.unwrap() <= s.h);
            }
        }
    }

    #[test]
    fn constant_dominance_matches_single_law() {
        let tm = flat(-0.5);
        let r = dominance_check(&tm, 0.0, 4.0, 4000, 1e-2, 3).unwrap();
        assert!(r.ordered(), "{r:?}");
        let r0 = dominance_check(&tm, 0.0, 0.0, 10, 1e-2, 3).unwrap();
        assert!(r0.ordered());
    }

    #[test]
    fn leaving_the_table_is_an_error() {
        let env = Environment::constant(1.0, -80.0, 80.0);
        let tm = solve_b(&env, -2.0, (0.0, 5.0)).unwrap();
        assert!(matches!(tilted_positions(&tm, 1.0, &[10.0], 1e-2, 4, 1), Err(Error::OutOfDomain { .. })));
    }
}
