//! Small statistics toolbox shared by the Monte Carlo routines and the
//! acceptance checks.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub fn normal_sf(z: f64) -> f64 {
    std_normal().sf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `ln P(Z >= z)` for a standard normal, stable far in the tail.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < 8.0 {
        normal_sf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - z.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// A probability estimate with its standard error and a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Proportion {
    pub p: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Proportion {
    /// Wilson score interval at 95%.
    pub fn from_counts(hits: usize, n: usize) -> Self {
        let nf = n as f64;
        let p = hits as f64 / nf;
        let se = (p * (1.0 - p) / nf).sqrt();
        let z = 1.959_963_984_540_054;
        let denom = 1.0 + z * z / nf;
        let centre = (p + z * z / (2.0 * nf)) / denom;
        let half = z * ((p * (1.0 - p) + z * z / (4.0 * nf)) / nf).sqrt() / denom;
        Proportion { p, se, lo: (centre - half).max(0.0), hi: (centre + half).min(1.0), n }
    }
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Critical KS distance at level `alpha` for effective sizes `n1`, `n2`
/// (use `f64::INFINITY` for `n2` in the one-sample case).
pub fn ks_critical(alpha: f64, n1: f64, n2: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let inv = 1.0 / n1 + if n2.is_finite() { 1.0 / n2 } else { 0.0 };
    c * inv.sqrt()
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// One-sample KS distance of `samples` against the continuous CDF `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance between weighted samples.
pub fn ks_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let norm = |s: &[(f64, f64)]| {
        let mut v: Vec<(f64, f64)> = s.iter().copied().filter(|p| p.1 > 0.0).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        let total: f64 = v.iter().map(|p| p.1).sum();
        (v, total)
    };
    let (va, ta) = norm(a);
    let (vb, tb) = norm(b);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < va.len() || j < vb.len() {
        let x = match (va.get(i), vb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => break,
        };
        while i < va.len() && va[i].0 <= x {
            fa += va[i].1 / ta;
            i += 1;
        }
        while j < vb.len() && vb[j].0 <= x {
            fb += vb[j].1 / tb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d
}

/// Unweighted two-sample KS distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let wa: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0)).collect();
    let wb: Vec<(f64, f64)> = b.iter().map(|&x| (x, 1.0)).collect();
    let d = ks_weighted(&wa, &wb);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Kish effective sample size of a set of weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Ordinary least-squares line with the standard error of the slope.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub residual_sd: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    let residual_sd = (sse / dof).sqrt();
    LinearFit {
        slope,
        intercept,
        slope_se: residual_sd / sxx.sqrt(),
        residual_sd,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    }
}

/// Two-sided t test for a linear trend of `y` on `x` in a serially
/// correlated series: the series is cut into `batches` consecutive blocks
/// and the block means are regressed on each other.
#[derive(Debug, Clone, Copy)]
pub struct TrendTest {
    pub slope: f64,
    pub slope_se: f64,
    pub t: f64,
    pub dof: f64,
    /// Two-sided critical value of the t statistic at `level`.
    pub critical: f64,
}

impl TrendTest {
    pub fn consistent_with_zero(&self) -> bool {
        self.t.abs() <= self.critical
    }
}

pub fn batch_means_trend(x: &[f64], y: &[f64], batches: usize, level: f64) -> Option<TrendTest> {
    if batches < 3 || x.len() != y.len() || x.len() < batches {
        return None;
    }
    let len = x.len() / batches;
    let mean = |v: &[f64], b: usize| v[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64;
    let bx: Vec<f64> = (0..batches).map(|b| mean(x, b)).collect();
    let by: Vec<f64> = (0..batches).map(|b| mean(y, b)).collect();
    let fit = linear_fit(&bx, &by);
    let dof = (batches - 2) as f64;
    Some(TrendTest {
        slope: fit.slope,
        slope_se: fit.slope_se,
        t: fit.slope / fit.slope_se,
        dof,
        critical: student_t_quantile(0.5 + 0.5 * level, dof),
    })
}

/// Student-t quantile, used for small-sample intervals.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    use statrs::distribution::StudentsT;
    StudentsT::new(0.0, 1.0, dof).expect("valid dof").inverse_cdf(p)
}

/// Number of strict record maxima of `series`, where a new record must beat
/// the previous one by at least `min_increment`. The first value counts.
pub fn record_maxima(series: &[f64], min_increment: f64) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut count = 0;
    for &v in series {
        if v.is_finite() && (best == f64::NEG_INFINITY || v > best + min_increment) {
            best = v;
            count += 1;
        }
    }
    count
}

/// CDF of the first-passage time over distance `d > 0` for Brownian motion
/// with drift `c >= 0` (inverse Gaussian; Lévy law when `c == 0`).
pub fn first_passage_cdf(h: f64, d: f64, c: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let s = h.sqrt();
    let z1 = (c * h - d) / s;
    let z2 = (c * h + d) / s;
    // Φ(z1) + e^{2cd} Φ(-z2), second term in logs.
    let second = (2.0 * c * d + ln_normal_sf(z2)).exp();
    (normal_cdf(z1) + second).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_test_sees_a_line_and_not_noise() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let line: Vec<f64> = x.iter().map(|v| 0.5 * v + (v * 12.9898).sin()).collect();
        assert!(!batch_means_trend(&x, &line, 10, 0.95).unwrap().consistent_with_zero());
        let flat: Vec<f64> = x.iter().map(|v| (v * 78.233).sin()).collect();
        let t = batch_means_trend(&x, &flat, 10, 0.95).unwrap();
        assert!(t.consistent_with_zero(), "{t:?}");
        assert!((t.critical - 2.306).abs() < 1e-3);
        assert!(batch_means_trend(&x[..2], &flat[..2], 10, 0.95).is_none());
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let p = Proportion::from_counts(30, 100);
        assert!(p.lo < 0.3 && 0.3 < p.hi);
        assert!((p.se - (0.21f64 / 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_value_at_one_percent() {
        assert!((ks_critical(0.01, 1.0, f64::INFINITY) - 1.6276).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn weighted_ks_of_identical_samples_is_zero() {
        let a: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert_eq!(ks_weighted(&a, &a), 0.0);
        let b: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 + 100.0, 1.0)).collect();
        assert!((ks_weighted(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
    }

    #[test]
    fn records_respect_increment() {
        assert_eq!(record_maxima(&[1.0, 2.0, 2.05, 3.0, 1.0], 0.1), 3);
        assert_eq!(record_maxima(&[], 0.0), 0);
    }

    #[test]
    fn first_passage_cdf_limits() {
        // Lévy law: P(H <= h) = 2 P(Z >= d / sqrt(h)).
        let v = first_passage_cdf(4.0, 2.0, 0.0);
        assert!((v - 2.0 * normal_sf(1.0)).abs() < 1e-12);
        assert!(first_passage_cdf(1e6, 5.0, 1.0) > 0.999_999);
        // Far-tail evaluation stays finite.
        let t = first_passage_cdf(50.0, 100.0, 4.0);
        assert!(t.is_finite() && (0.0..=1.0).contains(&t));
    }
}
