//! Space and time perturbations of `E_x[e^{int_0^t xi(X_s) ds}; X_t >= y]`,
//! estimated by importance sampling under the tilt calibrated to speed
//! `(y - x) / t`.
//!
//! For each shift `h`:
//! - space: `ln E[...; X_t >= y + h] - ln E[...; X_t >= y]`
//! - time: `ln E[... up to t + h; X_{t+h} >= y] - ln E[...; X_t >= y]`
//!
//! Both ratios of one environment come from the same paths. Standard errors
//! come from a delete-one-group jackknife over `groups` groups of paths.
//! The space slope must be negative at `level`. The time ratio may grow at
//! most linearly, so the curvature of a quadratic fit must not be
//! significantly positive.
//!
//! Tables:
//! - `perturbation`: env, h, space, space_se, time, time_se. `env` is the
//!   environment seed.
//! - `perturbation_fits`: env, eta, space_slope, space_slope_se,
//!   time_slope, time_slope_se, curvature, curvature_se, min_ess.
//! - `perturbation_constant`: h, space_mc, space_exact, time_mc,
//!   time_exact, for a constant potential where the tail is Gaussian.

use super::grid;
use crate::config::{key, Key};
use crate::error::{Error, Result};
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::env::{sample_environment, EnvSpec, Environment};
use bbmre::stats::{self, ln_normal_sf, normal_quantile};
use bbmre::tilt::{calibrate_eta, endpoint_log_weights, solve_b, tail_estimate, SolveOptions, MIN_ESS};

pub const KEYS: &[Key] = &[
    key("ei", "0.5", "lower edge of the uniform knot law"),
    key("es", "1.5", "upper edge of the uniform knot law"),
    key("env_seeds", "[0, 1, 2, 3, 4]", "environment seeds"),
    key("x_lo", "-150.0", "left end of the environment window"),
    key("x_hi", "200.0", "right end of the environment window"),
    key("x", "0.0", "starting point"),
    key("y", "40.0", "level"),
    key("t", "20.0", "time; the tilt is calibrated to speed (y - x) / t"),
    key("h_max", "3.0", "largest shift"),
    key("h_step", "0.5", "shift spacing"),
    key("paths", "10000", "tilted paths per environment"),
    key("dt", "0.001", "Euler step of the tilted diffusion"),
    key("groups", "20", "jackknife groups"),
    key("level", "0.95", "two-sided confidence level"),
    key("oracle_rate", "1.0", "rate of the constant potential"),
    key("oracle_tol", "0.1", "relative tolerance on the constant-potential slopes"),
];

/// Ratios and fits of one set of paths.
struct Fit {
    space: Vec<f64>,
    time: Vec<f64>,
    space_slope: f64,
    time_slope: f64,
    curvature: f64,
}

impl Fit {
    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.space.clone();
        v.extend(&self.time);
        v.extend([self.space_slope, self.time_slope, self.curvature]);
        v
    }
}

/// Least-squares coefficient of `h^2` in a quadratic fit.
fn curvature(hs: &[f64], ys: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let hm = hs.iter().sum::<f64>() / n;
    let u: Vec<f64> = hs.iter().map(|h| h - hm).collect();
    let u2m = u.iter().map(|v| v * v).sum::<f64>() / n;
    let uu: f64 = u.iter().map(|v| v * v).sum();
    let cross: f64 = u.iter().map(|v| v * v * v).sum::<f64>() / uu;
    // u^2 with the constant and linear parts projected out.
    let q: Vec<f64> = u.iter().map(|v| v * v - u2m - cross * v).collect();
    q.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / q.iter().map(|a| a * a).sum::<f64>()
}

fn fit(samples: &[Vec<(f64, f64)>], hs: &[f64], y: f64, es: f64) -> Fit {
    let ln_tail = |k: usize, level: f64| tail_estimate(&samples[k], level, 0.0).mean.ln();
    let base = ln_tail(0, y);
    let space: Vec<f64> = hs.iter().map(|h| ln_tail(0, y + h) - base).collect();
    let time: Vec<f64> = hs.iter().enumerate().map(|(k, h)| ln_tail(k, y) - base + es * h).collect();
    Fit {
        space_slope: stats::linear_fit(hs, &space).slope,
        time_slope: stats::linear_fit(hs, &time).slope,
        curvature: curvature(hs, &time),
        space,
        time,
    }
}

/// Full-sample values and delete-one-group jackknife standard errors.
fn jackknife(
    samples: &[Vec<(f64, f64)>],
    groups: usize,
    f: impl Fn(&[Vec<(f64, f64)>]) -> Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let full = f(samples);
    let reps: Vec<Vec<f64>> = (0..groups)
        .map(|g| {
            let kept: Vec<Vec<(f64, f64)>> = samples
                .iter()
                .map(|s| s.iter().enumerate().filter(|(i, _)| i % groups != g).map(|(_, p)| *p).collect())
                .collect();
            f(&kept)
        })
        .collect();
    let gf = groups as f64;
    let se = (0..full.len())
        .map(|j| {
            let m = reps.iter().map(|r| r[j]).sum::<f64>() / gf;
            ((gf - 1.0) / gf * reps.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>()).sqrt()
        })
        .collect();
    (full, se)
}

struct Estimate {
    eta: f64,
    value: Fit,
    se: Fit,
    min_ess: f64,
}

fn estimate(run: &mut Run<'_>, env: &Environment, label: &str, hs: &[f64]) -> Result<Estimate> {
    let c = run.config;
    let (x, y, t) = (c.f64("x")?, c.f64("y")?, c.f64("t")?);
    let (n, dt, groups) = (c.usize("paths")?, c.f64("dt")?, c.usize("groups")?);
    let v = (y - x) / t;
    let eta = calibrate_eta(env, x, y, v, SolveOptions::default())?
        .eta()
        .ok_or_else(|| Error::Output(format!("{label}: no tilt reaches speed {v}")))?;
    let tm = solve_b(env, eta, (x - 30.0, y + 40.0))?;
    let times: Vec<f64> = hs.iter().map(|h| t + h).collect();
    let seed = run.stage(&format!("paths, {label}"));
    let samples = endpoint_log_weights(&tm, x, &times, n, dt, seed)?;
    let ess = (0..hs.len())
        .flat_map(|k| [tail_estimate(&samples[0], y + hs[k], 0.0).ess, tail_estimate(&samples[k], y, 0.0).ess])
        .fold(f64::INFINITY, f64::min);
    if ess < MIN_ESS {
        return Err(bbmre::Error::EffectiveSampleSize { ess, min: MIN_ESS }.into());
    }
    let (value, se) = jackknife(&samples, groups, |s| fit(s, hs, y, env.es()).to_vec());
    let m = hs.len();
    let unpack = |v: &[f64]| Fit {
        space: v[..m].to_vec(),
        time: v[m..2 * m].to_vec(),
        space_slope: v[2 * m],
        time_slope: v[2 * m + 1],
        curvature: v[2 * m + 2],
    };
    Ok(Estimate { eta, value: unpack(&value), se: unpack(&se), min_ess: ess })
}

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let hs = grid(0.0, c.f64("h_max")?, c.f64("h_step")?);
    let (x, y, t) = (c.f64("x")?, c.f64("y")?, c.f64("t")?);
    let (x_lo, x_hi) = (c.f64("x_lo")?, c.f64("x_hi")?);
    let z = normal_quantile(0.5 + 0.5 * c.f64("level")?);
    let spec = EnvSpec::uniform_iid(c.f64("ei")?, c.f64("es")?, x_lo, x_hi);
    let (oracle_rate, tol) = (c.f64("oracle_rate")?, c.f64("oracle_tol")?);

    let mut tab = Table::new(&["env", "h", "space", "space_se", "time", "time_se"]);
    let mut fits = Table::new(&[
        "env",
        "eta",
        "space_slope",
        "space_slope_se",
        "time_slope",
        "time_slope_se",
        "curvature",
        "curvature_se",
        "min_ess",
    ]);
    let mut plot = Plot::new("Space perturbation", "h", "ln ratio");
    for s in c.u64_list("env_seeds")? {
        run.fixed_stage(&format!("environment {s}"), s);
        let env = sample_environment(&spec, s)?;
        let e = estimate(run, &env, &format!("environment {s}"), &hs)?;
        let (v, se) = (&e.value, &e.se);
        for k in 0..hs.len() {
            tab.push(vec![s as f64, hs[k], v.space[k], se.space[k], v.time[k], se.time[k]]);
        }
        fits.push(vec![
            s as f64,
            e.eta,
            v.space_slope,
            se.space_slope,
            v.time_slope,
            se.time_slope,
            v.curvature,
            se.curvature,
            e.min_ess,
        ]);
        let upper = v.space_slope + z * se.space_slope;
        run.check(
            &format!("environment {s}: space perturbation decays"),
            Some(12),
            upper < 0.0,
            format!("slope {:.4} +- {:.4}, upper bound {upper:.4}", v.space_slope, z * se.space_slope),
        );
        run.check(
            &format!("environment {s}: time perturbation at most linear"),
            Some(12),
            v.curvature <= z * se.curvature,
            format!(
                "slope {:.4} +- {:.4}; curvature {:.5} vs bound {:.5}",
                v.time_slope,
                z * se.time_slope,
                v.curvature,
                z * se.curvature
            ),
        );
        plot = plot.curve(Curve::new(&format!("environment {s}"), &hs, &v.space));
    }
    run.table("perturbation", &tab)?;
    run.table("perturbation_fits", &fits)?;

    let flat = Environment::constant(oracle_rate, x_lo, x_hi);
    let e = estimate(run, &flat, "constant potential", &hs)?;
    let d = y - x;
    let base = ln_normal_sf(d / t.sqrt());
    let space_exact: Vec<f64> = hs.iter().map(|h| ln_normal_sf((d + h) / t.sqrt()) - base).collect();
    let time_exact: Vec<f64> = hs.iter().map(|h| ln_normal_sf(d / (t + h).sqrt()) - base + oracle_rate * h).collect();
    let mut ct = Table::new(&["h", "space_mc", "space_exact", "time_mc", "time_exact"]);
    for k in 0..hs.len() {
        ct.push(vec![hs[k], e.value.space[k], space_exact[k], e.value.time[k], time_exact[k]]);
    }
    run.table("perturbation_constant", &ct)?;
    for (name, mc, exact) in [
        ("space", e.value.space_slope, stats::linear_fit(&hs, &space_exact).slope),
        ("time", e.value.time_slope, stats::linear_fit(&hs, &time_exact).slope),
    ] {
        let rel = (mc / exact - 1.0).abs();
        run.check(
            &format!("constant potential: {name} slope matches the Gaussian tail"),
            None,
            rel <= tol,
            format!("fitted {mc:.4} vs exact {exact:.4}: relative error {rel:.4}"),
        );
    }
    let plot = plot.curve(Curve::new("constant, exact", &hs, &space_exact));
    run.plot("perturbation", &plot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_recovers_the_quadratic_term() {
        let hs: Vec<f64> = (0..7).map(|i| 0.5 * i as f64).collect();
        let ys: Vec<f64> = hs.iter().map(|h| 1.0 - 2.0 * h + 0.3 * h * h).collect();
        assert!((curvature(&hs, &ys) - 0.3).abs() < 1e-12);
        let line: Vec<f64> = hs.iter().map(|h| 4.0 + h).collect();
        assert!(curvature(&hs, &line).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_a_mean_is_the_usual_standard_error() {
        // One "time" whose statistic is the plain mean of the positions.
        let xs: Vec<(f64, f64)> = (0..40).map(|i| ((i * 7 % 13) as f64, 0.0)).collect();
        let (full, se) =
            jackknife(&[xs.clone()], 40, |s| vec![s[0].iter().map(|p| p.0).sum::<f64>() / s[0].len() as f64]);
        let values: Vec<f64> = xs.iter().map(|p| p.0).collect();
        let (m, sem) = stats::mean_se(&values);
        assert!((full[0] - m).abs() < 1e-12);
        assert!((se[0] - sem).abs() < 1e-10);
    }

    #[test]
    fn zero_shift_gives_zero_ratios() {
        let samples = vec![vec![(41.0, -1.0), (39.0, 0.0), (45.0, -2.0)]; 2];
        let f = fit(&samples, &[0.0, 1.0], 40.0, 1.5);
        assert_eq!(f.space[0], 0.0);
        assert_eq!(f.time[0], 0.0);
    }
}
