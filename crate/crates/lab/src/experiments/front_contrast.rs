//! Width of the transition front of `w^0` against the spread of `M(t)` in a
//! two-valued block environment.
//!
//! Table `front_contrast` (t, width, spread): `width` is the `width_eps`
//! front width of `w^0(t, .)`, `spread` is `m_{0.99}(t) - m_{0.01}(t)`.
//! Records are counted on `t >= burn_in` and must beat the previous record
//! by `min_increment`. The largest spread on `t >= burn_in` must be below a
//! third of the final width record.

use super::grid;
use crate::config::{key, optional, Key};
use crate::error::Result;
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::branching::OffspringDistribution;
use bbmre::env::{load_environment, sample_environment, EnvSpec, Environment};
use bbmre::pde::{fkpp_domain, front_width, quantile_table, solve_fkpp, FkppRun, SolverConfig};
use bbmre::stats::record_maxima;

pub const KEYS: &[Key] = &[
    key("ei", "0.4", "rate on the low blocks"),
    key("es", "1.0", "rate on the high blocks"),
    key("mean_low", "20.0", "mean length of a low block"),
    key("mean_high", "20.0", "mean length of a high block"),
    key("ramp", "2.0", "width of the linear ramps between blocks"),
    key("env_dx", "0.1", "knot spacing of the environment"),
    key("x_lo", "-600.0", "left end of the environment window"),
    key("x_hi", "400.0", "right end of the environment window"),
    key("env_seed", "1", "environment seed"),
    optional("env_file", "environment file; replaces the block law"),
    key("t_end", "100.0", "horizon"),
    key("dt_out", "1.0", "spacing of the output times"),
    key("width_eps", "0.01", "level of the front width"),
    key("burn_in", "10.0", "records are counted from this time on"),
    key("min_increment", "1.0", "margin a new record must clear"),
    key("min_width_records", "5", "required number of width records"),
    key("y_step", "1.0", "level spacing of the quantile table"),
    key("dx", "0.1", "solver grid spacing"),
    key("dt", "0.01", "solver time step"),
];

fn environment(run: &mut Run<'_>) -> Result<Environment> {
    let c = run.config;
    if let Some(path) = c.opt_string("env_file")? {
        return Ok(load_environment(path)?);
    }
    let spec = EnvSpec::two_valued_blocks(
        c.f64("ei")?,
        c.f64("es")?,
        c.f64("mean_low")?,
        c.f64("mean_high")?,
        c.f64("ramp")?,
        c.f64("env_dx")?,
        c.f64("x_lo")?,
        c.f64("x_hi")?,
    );
    let seed = c.u64("env_seed")?;
    run.fixed_stage("environment", seed);
    Ok(sample_environment(&spec, seed)?)
}

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let env = environment(run)?;
    let c = run.config;
    let (t_end, dt_out, eps) = (c.f64("t_end")?, c.f64("dt_out")?, c.f64("width_eps")?);
    let (burn_in, min_inc) = (c.f64("burn_in")?, c.f64("min_increment")?);
    let min_records = c.usize("min_width_records")?;
    let cfg = SolverConfig::default().with_grid(c.f64("dx")?, c.f64("dt")?);
    let y_step = c.f64("y_step")?;
    let contrast = env.es() / env.ei();
    if !(contrast > 2.0) {
        run.warn(format!("es/ei = {contrast:.3} <= 2: the width is not expected to grow"));
    }

    let times = grid(dt_out, t_end, dt_out);
    let d = OffspringDistribution::binary();
    let (lo, hi) = fkpp_domain(0.0, t_end, env.es(), (0.0, 0.0), cfg.dx);
    let sol = solve_fkpp(&env, &d, &FkppRun::heaviside(0.0, lo, hi, times.clone()).with_config(cfg))?;
    let widths: Vec<f64> = sol.snapshots.iter().map(|w| front_width(w, eps)).collect::<bbmre::Result<_>>()?;
    let ys = grid(-5.0, (2.0 * env.es()).sqrt() * t_end + 5.0, y_step);
    let spread = quantile_table(&env, &d, &ys, &times, &cfg)?.spread()?;

    let mut tab = Table::new(&["t", "width", "spread"]);
    for i in 0..times.len() {
        tab.push(vec![times[i], widths[i], spread[i]]);
    }
    run.table("front_contrast", &tab)?;

    run.check("width is non-negative", None, widths.iter().all(|w| *w >= 0.0), "front width >= 0 at every output time");
    let start = times.iter().position(|t| *t >= burn_in).unwrap_or(times.len());
    let width_records = record_maxima(&widths[start..], min_inc);
    let spread_records = record_maxima(&spread[start..], min_inc);
    run.check(
        "front width keeps setting records",
        Some(11),
        width_records >= min_records,
        format!("{width_records} width records on t >= {burn_in} (need >= {min_records})"),
    );
    let final_width = widths[start..].iter().copied().fold(0.0, f64::max);
    let max_spread = spread[start..].iter().copied().fold(0.0, f64::max);
    run.check(
        "spread stays below a third of the width",
        Some(11),
        3.0 * max_spread < final_width,
        format!("largest spread {max_spread:.3} on t >= {burn_in} vs final width record {final_width:.3} / 3"),
    );
    run.check(
        "spread sets fewer records",
        None,
        3 * spread_records < width_records,
        format!("{spread_records} spread records vs {width_records} width records"),
    );

    let plot = Plot::new("Front width and spread", "t", "length")
        .curve(Curve::new(&format!("width, eps = {eps}"), &times, &widths))
        .curve(Curve::new("m99 - m01", &times, &spread));
    run.plot("front_contrast", &plot)
}
