//! Speed of the homogeneous front from the Heaviside solution `w^0`.
//!
//! Table `front_speed` (t, median, width): `median` is the position `y` with
//! `w^0(t, -y) = 1/2`, i.e. the median of `M(t)`; `width` is the
//! `width_eps` front width.

use super::grid;
use crate::config::{key, Key};
use crate::error::{Error, Result};
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::branching::OffspringDistribution;
use bbmre::env::Environment;
use bbmre::pde::{fkpp_domain, front_width, solve_fkpp, FkppRun, GridFunction, SolverConfig};
use bbmre::stats;

pub const KEYS: &[Key] = &[
    key("xi", "1.0", "constant branching rate"),
    key("t_min", "20.0", "start of the fitting window"),
    key("t_max", "40.0", "end of the fitting window"),
    key("t_step", "1.0", "snapshot spacing"),
    key("width_eps", "0.01", "level of the front width"),
    key("tolerance", "0.05", "relative tolerance on the speed"),
    key("dx", "0.1", "solver grid spacing"),
    key("dt", "0.01", "solver time step"),
];

/// Leftmost `x` where the increasing profile `w` reaches `level`.
pub(crate) fn level_point(w: &GridFunction, level: f64) -> Result<f64> {
    let i = w
        .values
        .iter()
        .position(|v| *v >= level)
        .filter(|i| *i > 0)
        .ok_or_else(|| Error::Output(format!("profile does not cross {level} inside the grid")))?;
    let (a, b) = (w.values[i - 1], w.values[i]);
    Ok(w.x(i - 1) + (level - a) / (b - a) * w.dx)
}

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let xi = c.f64("xi")?;
    let times = grid(c.f64("t_min")?, c.f64("t_max")?, c.f64("t_step")?);
    let eps = c.f64("width_eps")?;
    let tol = c.f64("tolerance")?;
    let cfg = SolverConfig::default().with_grid(c.f64("dx")?, c.f64("dt")?);
    let t_end = *times.last().expect("non-empty grid");
    let (lo, hi) = fkpp_domain(0.0, t_end, xi, (0.0, 0.0), cfg.dx);
    let env = Environment::constant(xi, lo - 1.0, hi + 1.0);
    let sol = solve_fkpp(
        &env,
        &OffspringDistribution::binary(),
        &FkppRun::heaviside(0.0, lo, hi, times.clone()).with_config(cfg),
    )?;

    let mut tab = Table::new(&["t", "median", "width"]);
    let mut medians = Vec::new();
    let mut widths = Vec::new();
    for (t, w) in times.iter().zip(&sol.snapshots) {
        let m = -level_point(w, 0.5)?;
        let wd = front_width(w, eps)?;
        tab.push(vec![*t, m, wd]);
        medians.push(m);
        widths.push(wd);
    }
    run.table("front_speed", &tab)?;

    let fit = stats::linear_fit(&times, &medians);
    let target = (2.0 * xi).sqrt();
    let rel = (fit.slope / target - 1.0).abs();
    run.check(
        "homogeneous front speed",
        Some(2),
        rel <= tol,
        format!("slope {:.5} +- {:.5} vs sqrt(2 xi) = {target:.5}: relative error {rel:.4}", fit.slope, fit.slope_se),
    );
    let (min, max) = widths.iter().fold((f64::INFINITY, 0.0f64), |(a, b), w| (a.min(*w), b.max(*w)));
    run.check("front width is stationary", None, max / min - 1.0 <= tol, format!("width in [{min:.4}, {max:.4}]"));
    run.check("no clamping", None, sol.clamp_events == 0, format!("{} clamping events", sol.clamp_events));

    let anchor = fit.intercept + fit.slope * times[0];
    let line: Vec<f64> = times.iter().map(|t| anchor + target * (t - times[0])).collect();
    let plot = Plot::new("Median of M(t), homogeneous potential", "t", "median")
        .curve(Curve::new("median", &times, &medians))
        .curve(Curve::new("slope sqrt(2 xi)", &times, &line));
    run.plot("front_speed", &plot)
}
