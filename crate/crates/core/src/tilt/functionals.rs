use super::measure::TiltedMeasure;
use super::sde::{run_to_target, tilted_hitting_samples, tilted_positions, Barrier, HittingSample, MIN_ESS};
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::stats::{self, Proportion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Importance-sampling estimate from a vector of per-path weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub mean: f64,
    pub se: f64,
    pub ess: f64,
    pub n: usize,
}

impl WeightedEstimate {
    pub fn from_weights(w: &[f64]) -> Self {
        let (mean, se) = stats::mean_se(w);
        WeightedEstimate { mean, se, ess: stats::effective_sample_size(w), n: w.len() }
    }

    fn guarded(w: &[f64]) -> Result<Self> {
        let e = Self::from_weights(w);
        if e.ess < MIN_ESS {
            return Err(Error::EffectiveSampleSize { ess: e.ess, min: MIN_ESS });
        }
        Ok(e)
    }
}

/// Estimates of `Y^~ = E_x[e^{int zeta}; H_y in [d/v - K, d/v]]` and
/// `Y^< = E_x[e^{int zeta}; H_y < d/v - K]` with `d = y - x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YFunctionals {
    pub approx: WeightedEstimate,
    pub below: WeightedEstimate,
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub ratio_se: f64,
    pub z: f64,
}

/// Importance sampling under the tilted law of `tm`: each path that hits
/// `y` at time `H` carries `Z_{x,y} e^{-eta H}`.
pub fn y_functionals(
    tm: &TiltedMeasure,
    x: f64,
    y: f64,
    v: f64,
    k: f64,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<YFunctionals> {
    if !(v > 0.0) || !(k >= 0.0) {
        return invalid("need v > 0 and K >= 0");
    }
    let horizon = (y - x) / v;
    let log_z = tm.log_z(x, y)?;
    let eta = tm.eta();
    let samples = tilted_hitting_samples(tm, x, y, dt, horizon, n, seed)?;
    let start = horizon - k;
    let weight = |s: &HittingSample, inside: bool| {
        if !s.censored && inside {
            (log_z - eta * s.h).exp()
        } else {
            0.0
        }
    };
    let wa: Vec<f64> = samples.iter().map(|s| weight(s, k > 0.0 && s.h >= start && s.h <= horizon)).collect();
    let wb: Vec<f64> = samples.iter().map(|s| weight(s, s.h < start)).collect();
    let approx = if k > 0.0 { WeightedEstimate::guarded(&wa)? } else { WeightedEstimate::from_weights(&wa) };
    let below = WeightedEstimate::guarded(&wb)?;
    let ratio = approx.mean / below.mean;
    let nf = n as f64;
    let cov = wa.iter().zip(&wb).map(|(a, b)| (a - approx.mean) * (b - below.mean)).sum::<f64>() / (nf * (nf - 1.0));
    let var = (approx.se / below.mean).powi(2) + (approx.mean * below.se).powi(2) / below.mean.powi(4)
        - 2.0 * approx.mean * cov / below.mean.powi(3);
    Ok(YFunctionals { approx, below, ratio, ratio_se: var.max(0.0).sqrt(), z: log_z.exp() })
}

/// Event frequencies for paths started at `y - v t` against the moving
/// barrier `y - v1 (t - s)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierStats {
    pub x: f64,
    pub v1: f64,
    /// `H_y <= t`.
    pub hit: Proportion,
    /// `H_y in [t - K, t]` and barrier time `>= t - K`.
    pub good: Proportion,
    /// `H_y <= t - L`.
    pub early: Proportion,
    /// `H_y in (t - L, t]`.
    pub late: Proportion,
    /// `H_y <= t` and barrier time `<= t - K`.
    pub hit_after_early_barrier: Proportion,
    pub n: usize,
    pub samples: Vec<HittingSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub y: f64,
    pub t: f64,
    pub v: f64,
    pub v1: f64,
    pub k: f64,
    pub l: f64,
}

/// Tilted Monte Carlo over `[0, t]` with per-step checks against the
/// barrier and the target level.
pub fn barrier_event_stats(tm: &TiltedMeasure, p: BarrierParams, n: usize, dt: f64, seed: u64) -> Result<BarrierStats> {
    let BarrierParams { y, t, v, v1, k, l } = p;
    if !(t > 0.0 && l > 0.0 && k > 0.0) {
        return invalid("need t, K, L > 0");
    }
    if l > k / 3.0 {
        return invalid(format!("L = {l} violates K >= 3L with K = {k}"));
    }
    if !(v > v1) {
        return invalid(format!("start speed v = {v} must exceed barrier speed v1 = {v1}"));
    }
    let x = y - v * t;
    let bar = Barrier { y, v1, t };
    let samples: Vec<HittingSample> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_to_target(tm, x, y, Some(bar), dt, t, &mut rng::stream(seed, i), None))
        .collect::<Result<_>>()?;
    let count =
        |f: &dyn Fn(&HittingSample) -> bool| Proportion::from_counts(samples.iter().filter(|s| f(s)).count(), n);
    let hit = |s: &HittingSample| !s.censored;
    Ok(BarrierStats {
        x,
        v1,
        hit: count(&hit),
        good: count(&|s| hit(s) && s.h >= t - k && s.barrier.is_some_and(|b| b >= t - k)),
        early: count(&|s| hit(s) && s.h <= t - l),
        late: count(&|s| hit(s) && s.h > t - l),
        hit_after_early_barrier: count(&|s| hit(s) && s.barrier.is_some_and(|b| b <= t - k)),
        n,
        samples,
    })
}

/// Samples for `E_x[e^{int_0^t zeta}; X_t >= y]` under the tilt of `tm`:
/// per time, the end points `X_t` with log-weights `ln Z(x) - ln Z(X_t) - eta t`.
pub fn endpoint_log_weights(
    tm: &TiltedMeasure,
    x: f64,
    times: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let pos = tilted_positions(tm, x, times, dt, n, seed)?;
    let lz0 = tm.ln_z(x)?;
    times
        .iter()
        .zip(pos)
        .map(|(&t, xs)| xs.into_iter().map(|xt| Ok((xt, lz0 - tm.ln_z(xt)? - tm.eta() * t))).collect())
        .collect()
}

/// Weights `1{X_t >= y} e^{lw}` from [`endpoint_log_weights`] output, with
/// every weight scaled by `e^{-shift}`.
pub fn tail_estimate(samples: &[(f64, f64)], y: f64, shift: f64) -> WeightedEstimate {
    let w: Vec<f64> = samples.iter().map(|&(xt, lw)| if xt >= y { (lw - shift).exp() } else { 0.0 }).collect();
    WeightedEstimate::from_weights(&w)
}

#[cfg(test)]
mod tests {
    use super::super::measure::{solve_b_with, SolveOptions};
    use super::*;
    use crate::env::Environment;

    fn flat(eta: f64) -> TiltedMeasure {
        let env = Environment::constant(1.0, -80.0, 150.0);
        solve_b_with(&env, eta, (-30.0, 120.0), SolveOptions { h: 1e-2, burn_in: Some(1.0) }).unwrap()
    }

    #[test]
    fn zero_width_window_is_zero() {
        let tm = flat(-2.0);
        let y = y_functionals(&tm, 0.0, 10.0, 2.0, 0.0, 2000, 1e-3, 1).unwrap();
        assert_eq!(y.approx.mean, 0.0);
        assert_eq!(y.ratio, 0.0);
    }

    #[test]
    fn flat_y_matches_levy_law() {
        let tm = flat(-2.0);
        let (d, v, k) = (10.0, 2.0, 1.0);
        let y = y_functionals(&tm, 0.0, d, v, k, 20000, 1e-3, 5).unwrap();
        let (a, b) = (d / v - k, d / v);
        let exact = stats::first_passage_cdf(b, d, 0.0) - stats::first_passage_cdf(a, d, 0.0);
        assert!((y.approx.mean - exact).abs() < 3.0 * y.approx.se, "{} {exact} {}", y.approx.mean, y.approx.se);
        let below = stats::first_passage_cdf(a, d, 0.0);
        assert!((y.below.mean - below).abs() < 3.0 * y.below.se, "{} {below}", y.below.mean);
    }

    #[test]
    fn vacuous_barrier_constraint() {
        let tm = flat(-10.0);
        let p = BarrierParams { y: 100.0, t: 20.0, v: 4.6, v1: 2.0, k: 20.0, l: 2.0 };
        let s = barrier_event_stats(&tm, p, 500, 2e-3, 3).unwrap();
        assert_eq!(s.good.p, s.hit.p);
        assert!(s.samples.iter().all(|h| h.censored || h.barrier.unwrap() <= h.h));
        assert!(barrier_event_stats(&tm, BarrierParams { l: 8.0, ..p }, 10, 2e-3, 3).is_err());
    }

    #[test]
    fn flat_hit_probability_matches_inverse_gaussian() {
        let tm = flat(-10.0);
        let p = BarrierParams { y: 100.0, t: 20.0, v: 4.6, v1: 2.0, k: 6.0, l: 2.0 };
        let s = barrier_event_stats(&tm, p, 4000, 2e-3, 8).unwrap();
        let exact = stats::first_passage_cdf(20.0, 4.6 * 20.0, 20f64.sqrt());
        assert!((s.hit.p - exact).abs() < 3.0 * s.hit.se, "{} {exact}", s.hit.p);
    }

    #[test]
    fn zero_shift_endpoint_ratio_is_one() {
        let tm = flat(-0.5);
        let w = endpoint_log_weights(&tm, 0.0, &[5.0], 500, 1e-2, 2).unwrap();
        let a = tail_estimate(&w[0], 5.0, 0.0);
        let b = tail_estimate(&w[0], 5.0, 0.0);
        assert_eq!(a.mean / b.mean, 1.0);
        // zeta = 0: the weighted tail is the Brownian tail P(B_5 >= 5).
        let exact = stats::normal_sf(5.0 / 5f64.sqrt());
        assert!((a.mean - exact).abs() < 3.0 * a.se);
    }
}
