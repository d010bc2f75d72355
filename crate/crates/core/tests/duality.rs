use bbmre::branching::{
    exceedance, max_quantiles_mc, sample_maxima, Model, OffspringDistribution, DEFAULT_PARTICLE_CAP,
};
use bbmre::env::{sample_environment, EnvSpec, Environment, LatticeEnvironment};
use bbmre::pde::{
    fkpp_domain, quantile_table, solve_fkpp, solve_lattice_fkpp, solve_pam, FkppRun, GridFunction, LatticeRun,
    SolverConfig,
};
use bbmre::{rng, stats};
use rand_distr::{Distribution, StandardNormal};

#[test]
fn fkpp_solution_is_the_exceedance_probability() {
    let env = Environment::constant(1.0, -80.0, 80.0);
    let d = OffspringDistribution::binary();
    let (t, y) = (2.0, 2.0);
    let (lo, hi) = fkpp_domain(y, t, 1.0, (0.0, 0.0), 0.1);
    let sol = solve_fkpp(&env, &d, &FkppRun::heaviside(y, lo, hi, vec![t])).unwrap();
    let w = sol.last().eval(0.0).unwrap();
    assert_eq!(sol.clamp_events, 0);
    let reps = sample_maxima(Model::Continuum(&env, 0.0), &d, t, 10_000, 3, DEFAULT_PARTICLE_CAP).unwrap();
    let p = exceedance(&reps, y);
    assert!((p.p - w).abs() <= 3.0 * p.se, "MC {} +- {} vs PDE {w}", p.p, p.se);
}

#[test]
fn lattice_trace_is_the_exceedance_probability() {
    let env = LatticeEnvironment::constant(1.0, 1.0, -150, 150).unwrap();
    let d = OffspringDistribution::binary();
    let (t, y) = (3.0, 3);
    let sol = solve_lattice_fkpp(&env, &d, &LatticeRun::new(&env, y, vec![t], 1e-3)).unwrap();
    let w = sol.trace.last().unwrap().1;
    let reps = sample_maxima(Model::Lattice(&env, 0), &d, t, 10_000, 8, DEFAULT_PARTICLE_CAP).unwrap();
    let p = exceedance(&reps, y as f64);
    assert!((p.p - w).abs() <= 3.0 * p.se, "MC {} +- {} vs ODE {w}", p.p, p.se);
}

#[test]
fn quantile_table_matches_monte_carlo_quantile() {
    let env = sample_environment(&EnvSpec::uniform_iid(0.5, 1.0, -70.0, 70.0), 12).unwrap();
    let d = OffspringDistribution::binary();
    let t = 3.0;
    let y_grid: Vec<f64> = (0..=120).map(|i| -2.0 + 0.1 * i as f64).collect();
    let table = quantile_table(&env, &d, &y_grid, &[t], &SolverConfig::default()).unwrap();
    assert!(table.monotonicity_defect() <= 1e-9);
    let mc = max_quantiles_mc(Model::Continuum(&env, 0.0), &d, t, 4000, &[0.9], 30).unwrap();
    let pde = table.quantile(0, 0.9).unwrap();
    assert!(
        (mc.values[0] - pde).abs() <= mc.half_widths[0],
        "MC {} +- {} vs PDE {pde}",
        mc.values[0],
        mc.half_widths[0]
    );
}

#[test]
fn pam_matches_feynman_kac() {
    let env = Environment::constant(1.0, -40.0, 40.0);
    let init = GridFunction::from_fn(-30.0, 0.1, 601, |x| {
        if x > 0.0 {
            1.0
        } else if x == 0.0 {
            0.5
        } else {
            0.0
        }
    });
    let u = solve_pam(&env, &init, 1.0, 0.01).unwrap().eval(0.0).unwrap();
    // E_0[e^{int xi}; X_1 >= 0] with xi == 1.
    let e = 1f64.exp();
    let w: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng::stream(6, i));
            if z >= 0.0 {
                e
            } else {
                0.0
            }
        })
        .collect();
    let (m, se) = stats::mean_se(&w);
    assert!((u - m).abs() <= 3.0 * se, "PDE {u} vs MC {m} +- {se}");
    assert!((u - 0.5 * e).abs() < 1e-3);
}
