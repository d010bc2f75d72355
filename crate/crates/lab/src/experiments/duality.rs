//! `w^y(t, x0)` from the F-KPP solver against Monte Carlo `P_{x0}(M(t) >= y)`.
//!
//! Tables: `duality_exceedance` (y, pde, mc, mc_se), `duality_profile`
//! (x, w) for the focal `y`, `duality_quantiles` (level, mc, mc_half_width,
//! pde).

use super::{fmt_list, grid};
use crate::config::{key, Key};
use crate::error::Result;
use crate::svg::{Curve, Plot};
use crate::table::Table;
use crate::Run;
use bbmre::branching::{empirical_quantiles, exceedance, sample_maxima, Model, OffspringDistribution};
use bbmre::env::Environment;
use bbmre::pde::{fkpp_domain, solve_fkpp, FkppRun, QuantileTable, SolverConfig};

pub const KEYS: &[Key] = &[
    key("xi", "1.0", "constant branching rate"),
    key("t", "4.0", "time horizon"),
    key("y", "2.0", "focal level for the acceptance comparison"),
    key("x0", "0.0", "starting point"),
    key("trees", "20000", "Monte Carlo replicates"),
    key("y_min", "0.0", "first level of the exceedance table"),
    key("y_max", "4.0", "last level of the exceedance table"),
    key("y_step", "0.5", "level spacing of the exceedance table"),
    key("quantile_levels", "[0.1, 0.25, 0.5, 0.75, 0.9]", "levels for the quantile comparison"),
    key("dx", "0.1", "solver grid spacing"),
    key("dt", "0.01", "solver time step"),
];

pub fn run(run: &mut Run<'_>) -> Result<()> {
    let c = run.config;
    let (xi, t, y, x0) = (c.f64("xi")?, c.f64("t")?, c.f64("y")?, c.f64("x0")?);
    let n = c.usize("trees")?;
    let cfg = SolverConfig::default().with_grid(c.f64("dx")?, c.f64("dt")?);
    let levels = c.f64_list("quantile_levels")?;
    let mut ys = grid(c.f64("y_min")?, c.f64("y_max")?, c.f64("y_step")?);
    if !ys.iter().any(|v| (v - y).abs() < 1e-12) {
        ys.push(y);
        ys.sort_by(f64::total_cmp);
    }
    let d = OffspringDistribution::binary();
    let reach = (2.0 * xi).sqrt() * t + 10.0 * t.sqrt() + 20.0;
    let env = Environment::constant(xi, x0 - reach, x0 + reach);

    let w_at = |level: f64| -> Result<f64> {
        let (lo, hi) = fkpp_domain(level, t, xi, (x0, x0), cfg.dx);
        let sol = solve_fkpp(&env, &d, &FkppRun::heaviside(level, lo, hi, vec![t]).with_config(cfg))?;
        Ok(sol.last().eval(x0)?)
    };

    let pde: Vec<f64> = ys.iter().map(|v| w_at(*v)).collect::<Result<_>>()?;
    let seed = run.stage("monte-carlo");
    let reps = sample_maxima(Model::Continuum(&env, x0), &d, t, n, seed, bbmre::branching::DEFAULT_PARTICLE_CAP)?;
    let truncated = reps.iter().filter(|r| r.truncated).count();

    let mut tab = Table::new(&["y", "pde", "mc", "mc_se"]);
    let mut mc = Vec::new();
    for (v, w) in ys.iter().zip(&pde) {
        let p = exceedance(&reps, *v);
        mc.push(p.p);
        tab.push(vec![*v, *w, p.p, p.se]);
    }
    run.table("duality_exceedance", &tab)?;

    let focal = ys.iter().position(|v| (v - y).abs() < 1e-12).expect("focal level is on the grid");
    let p = exceedance(&reps, y);
    let diff = (pde[focal] - p.p).abs();
    run.check(
        "duality",
        Some(1),
        diff <= 3.0 * p.se,
        format!(
            "PDE w^{y}({t}, {x0}) = {:.5}, MC {:.5} +- {:.5} over {n} trees: |diff| = {:.2} SE",
            pde[focal],
            p.p,
            p.se,
            diff / p.se
        ),
    );
    run.check("no truncated replicates", None, truncated == 0, format!("{truncated} of {n} replicates hit the cap"));

    let (lo, hi) = fkpp_domain(y, t, xi, (x0 - 10.0, x0 + 10.0), cfg.dx);
    let sol = solve_fkpp(&env, &d, &FkppRun::heaviside(y, lo, hi, vec![t]).with_config(cfg))?;
    let mut prof = Table::new(&["x", "w"]);
    for (x, w) in sol.last().window(x0 - 10.0, x0 + 10.0) {
        prof.push(vec![x, w]);
    }
    run.table("duality_profile", &prof)?;

    let maxima: Vec<f64> = reps.iter().map(|r| r.max).collect();
    let est = empirical_quantiles(&maxima, &levels, t)?;
    let (q_lo, q_hi) = est.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let fine = grid((q_lo - 2.0).floor(), (q_hi + 2.0).ceil(), 0.1);
    let columns: Vec<Vec<f64>> = fine.iter().map(|v| w_at(*v).map(|w| vec![w])).collect::<Result<_>>()?;
    let table = QuantileTable::from_columns(vec![t], fine, &columns)?;
    let mut qt = Table::new(&["level", "mc", "mc_half_width", "pde"]);
    let mut pde_q = Vec::new();
    for (i, eps) in levels.iter().enumerate() {
        let q = table.quantile(0, *eps)?;
        pde_q.push(q);
        qt.push(vec![*eps, est.values[i], est.half_widths[i], q]);
    }
    run.table("duality_quantiles", &qt)?;
    if let Some(i) = levels.iter().position(|l| *l == 0.5) {
        run.check(
            "median inside its order-statistic band",
            None,
            (est.values[i] - pde_q[i]).abs() <= est.half_widths[i],
            format!(
                "PDE {:.4}, MC {:.4} +- {:.4}; all levels PDE {} MC {}",
                pde_q[i],
                est.values[i],
                est.half_widths[i],
                fmt_list(&pde_q),
                fmt_list(&est.values)
            ),
        );
    }
    let plot = Plot::new(&format!("P(M({t}) >= y) from x0 = {x0}"), "y", "probability")
        .curve(Curve::new("F-KPP", &ys, &pde))
        .curve(Curve::new("Monte Carlo", &ys, &mc));
    run.plot("duality", &plot)
}
