//! Spread `m_{0.99}(t) - m_{0.01}(t)` of the maximum of the lattice model
//! against its median, with the potential overlaid.
//!
//! Per environment seed `s`: `figure1_seed<s>` (t, m01, median, m99, spread)
//! and `figure1_potential_seed<s>` (x, xi). `figure1_summary` has one row per
//! seed: (seed, ratio, slope, slope_se, t_stat, t_critical, corr, mc_quantile,
//! mc_half_width, exact_quantile). `corr` is the correlation of the spread
//! with the mean rate on the `potential_ahead` sites ahead of the median; it
//! is reported, not checked.

use crate::config::{key, optional, Key};
use crate::error::{config_err, Error, Result};
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::branching::{max_quantiles_mc, Model, OffspringDistribution};
use bbmre::env::{
    load_lattice_environment, sample_lattice_environment, EnvKind, EnvSpec, LatticeEnvironment, Marginal,
};
use bbmre::pde::{lattice_quantile_table, QuantileTable};
use bbmre::stats;

pub const KEYS: &[Key] = &[
    key("marginal", "\"two-point\"", "site law: \"two-point\" (ei or es) or \"uniform\" on [ei, es]"),
    key("ei", "0.25", "lower rate"),
    key("es", "3.0", "upper rate"),
    key("p_high", "0.5", "probability of es under the two-point law"),
    key("kappa", "1.0", "total jump rate"),
    key("seeds", "[1, 2]", "environment seeds, one run each"),
    optional("env_file", "lattice environment file; replaces the law and the seeds"),
    key("x_lo", "-1000", "first site of the sampled window"),
    key("x_hi", "1600", "last site of the sampled window"),
    key("t_end", "100.0", "horizon"),
    key("dt_out", "1.0", "spacing of the output times"),
    key("dt", "0.01", "RK4 step"),
    key("stationary_from", "25.0", "the stationary window is t > stationary_from"),
    key("batches", "10", "batches of the trend test"),
    key("level", "0.95", "confidence level of the trend test"),
    key("min_ratio", "1.2", "required max/min spread ratio in the stationary window"),
    key("potential_ahead", "10", "sites ahead of the median averaged for the reported correlation"),
    key("mc_t", "3.0", "time of the Monte Carlo spot-check (must be an output time)"),
    key("mc_level", "0.5", "quantile level of the spot-check"),
    key("mc_replicates", "2000", "trees in the spot-check"),
];

fn environments(run: &Run<'_>) -> Result<Vec<LatticeEnvironment>> {
    let c = run.config;
    if let Some(path) = c.opt_string("env_file")? {
        return Ok(vec![load_lattice_environment(path)?]);
    }
    let marginal = match c.string("marginal")?.as_str() {
        "two-point" => Marginal::TwoPoint { p_high: c.f64("p_high")? },
        "uniform" => Marginal::Uniform,
        other => return config_err(format!("unknown marginal {other:?}")),
    };
    let mut spec =
        EnvSpec::lattice_uniform(c.f64("ei")?, c.f64("es")?, c.f64("kappa")?, c.i64("x_lo")?, c.i64("x_hi")?);
    spec.kind = EnvKind::LatticeIid { marginal, kappa: c.f64("kappa")? };
    c.u64_list("seeds")?.into_iter().map(|s| Ok(sample_lattice_environment(&spec, s)?)).collect()
}

/// `inf{y : P(M(t) <= y) >= eps}` over the integers, read off an
/// integer-level table.
fn integer_quantile(table: &QuantileTable, ti: usize, eps: f64) -> Result<f64> {
    let row = &table.p[ti];
    // P(M <= y) = 1 - P(M >= y + 1).
    (0..row.len() - 1)
        .find(|&j| 1.0 - row[j + 1] >= eps)
        .map(|j| table.y_grid[j])
        .ok_or_else(|| Error::Output(format!("quantile {eps} above the level grid")))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let (t_end, dt_out, dt) = (c.f64("t_end")?, c.f64("dt_out")?, c.f64("dt")?);
    let (from, batches, level) = (c.f64("stationary_from")?, c.usize("batches")?, c.f64("level")?);
    let min_ratio = c.f64("min_ratio")?;
    let ahead = c.i64("potential_ahead")?;
    let (mc_t, mc_level, mc_n) = (c.f64("mc_t")?, c.f64("mc_level")?, c.usize("mc_replicates")?);
    let n_t = (t_end / dt_out).round() as usize;
    let times: Vec<f64> = (1..=n_t).map(|i| i as f64 * dt_out).collect();
    let mc_ti = times
        .iter()
        .position(|t| (t - mc_t).abs() < 1e-9)
        .ok_or_else(|| Error::Config(format!("mc_t = {mc_t} is not an output time")))?;
    let d = OffspringDistribution::binary();
    let mut summary = Table::new(&[
        "seed",
        "ratio",
        "slope",
        "slope_se",
        "t_stat",
        "t_critical",
        "corr",
        "mc_quantile",
        "mc_half_width",
        "exact_quantile",
    ]);

    for env in environments(run)? {
        let s = env.seed();
        run.fixed_stage(&format!("environment {s}"), s);
        let y_max = (1.2 * (2.0 * env.es()).sqrt() * t_end).ceil() as i64 + 5;
        let ys: Vec<i64> = (-5..=y_max).collect();
        let table = lattice_quantile_table(&env, &d, &ys, &times, dt)?;
        let (m01, med, m99) = (table.curve(0.01)?, table.median()?, table.curve(0.99)?);
        let spread: Vec<f64> = m99.iter().zip(&m01).map(|(a, b)| a - b).collect();
        let mut tab = Table::new(&["t", "m01", "median", "m99", "spread"]);
        for i in 0..n_t {
            tab.push(vec![times[i], m01[i], med[i], m99[i], spread[i]]);
        }
        run.table(&format!("figure1_seed{s}"), &tab)?;

        let x_lo = med.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64 - 5;
        let x_hi = m99.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 5;
        let mut pot = Table::new(&["x", "xi"]);
        for x in x_lo..=x_hi {
            pot.push(vec![x as f64, env.rate(x)?]);
        }
        run.table(&format!("figure1_potential_seed{s}"), &pot)?;

        let ordered = (0..n_t).all(|i| m01[i] <= med[i] && med[i] <= m99[i]);
        run.check(&format!("seed {s}: quantile curves ordered"), None, ordered, "m01 <= median <= m99 on every row");

        let start = times.iter().position(|t| *t > from).unwrap_or(n_t);
        let (sm, ss) = (&med[start..], &spread[start..]);
        let (lo, hi) = ss.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        let ratio = hi / lo;
        run.check(
            &format!("seed {s}: spread fluctuates"),
            Some(10),
            ratio >= min_ratio,
            format!("max/min spread over t > {from}: {hi:.3}/{lo:.3} = {ratio:.3} (need >= {min_ratio})"),
        );
        let trend = stats::batch_means_trend(sm, ss, batches, level)
            .ok_or_else(|| Error::Config(format!("stationary window too short for {batches} batches")))?;
        run.check(
            &format!("seed {s}: no trend of spread in median"),
            Some(10),
            trend.consistent_with_zero(),
            format!(
                "batch-means slope {:.5} +- {:.5}, |t| = {:.2} vs t_{{{},{}}} = {:.2}",
                trend.slope,
                trend.slope_se,
                trend.t.abs(),
                0.5 + 0.5 * level,
                trend.dof,
                trend.critical
            ),
        );

        let local: Vec<f64> = sm
            .iter()
            .map(|m| {
                let x0 = m.round() as i64;
                (x0..x0 + ahead).map(|x| env.rate(x)).sum::<bbmre::Result<f64>>().map(|v| v / ahead as f64)
            })
            .collect::<bbmre::Result<_>>()?;
        let corr = correlation(ss, &local);

        let seed = run.stage(&format!("spot-check {s}"));
        let mc = max_quantiles_mc(Model::Lattice(&env, 0), &d, mc_t, mc_n, &[mc_level], seed)?;
        let exact = integer_quantile(&table, mc_ti, mc_level)?;
        run.check(
            &format!("seed {s}: Monte Carlo spot-check"),
            None,
            (mc.values[0] - exact).abs() <= mc.half_widths[0],
            format!("m_{mc_level}({mc_t}): MC {} +- {} vs table {exact}", mc.values[0], mc.half_widths[0]),
        );
        summary.push(vec![
            s as f64,
            ratio,
            trend.slope,
            trend.slope_se,
            trend.t,
            trend.critical,
            corr,
            mc.values[0],
            mc.half_widths[0],
            exact,
        ]);

        let xs: Vec<f64> = pot.column("x").expect("column exists");
        let xis: Vec<f64> = pot.column("xi").expect("column exists");
        let plot = Plot::new(&format!("Spread against median, environment {s}"), "median / x", "spread / potential")
            .curve(Curve::new("m99 - m01", &med, &spread))
            .curve(Curve::new("potential", &xs, &xis));
        run.plot(&format!("figure1_seed{s}"), &plot)?;
    }
    run.table("figure1_summary", &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_quantile_reads_the_step() {
        // P(M >= y) for y = 0..4: M is 1 or 2 with equal odds.
        let t = QuantileTable::from_columns(
            vec![1.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            &[vec![1.0], vec![1.0], vec![0.5], vec![0.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(integer_quantile(&t, 0, 0.5).unwrap(), 1.0);
        assert_eq!(integer_quantile(&t, 0, 0.51).unwrap(), 2.0);
        assert_eq!(integer_quantile(&t, 0, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn correlation_of_a_line_is_one() {
        let a = [1.0, 2.0, 3.0];
        assert!((correlation(&a, &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((correlation(&a, &[6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
    }
}
