use bbmre::env::{sample_environment, EnvSpec, Environment};
use bbmre::stats;
use bbmre::tilt::{
    annealed_environment, barrier_event_stats, calibrate_eta, default_dt, dominance_check, eta_bar, eta_bar_on,
    girsanov_crosscheck, log_z, solve_b, solve_b_with, tilted_hitting_samples, v1_v2, weighted_brownian_hits,
    y_functionals, BarrierParams, Calibration, SolveOptions, BOUND_TOL,
};
use proptest::prelude::*;

fn random_env(seed: u64) -> Environment {
    sample_environment(&EnvSpec::uniform_iid(0.5, 1.5, -150.0, 150.0), seed).unwrap()
}

#[test]
fn constant_potential_normaliser() {
    let env = Environment::constant(1.0, -150.0, 50.0);
    for alpha in [0.25, 0.5, 2.0] {
        let tm = solve_b(&env, -alpha, (0.0, 10.0)).unwrap();
        for d in [1.0, 5.0] {
            let exact = -(2.0 * alpha).sqrt() * d;
            let got = log_z(&tm, 2.0, 2.0 + d).unwrap();
            assert!(((got - exact) / exact).abs() <= 1e-4, "alpha {alpha} d {d}: {got} vs {exact}");
        }
        assert_eq!(log_z(&tm, 3.0, 3.0).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn drift_respects_bounds_and_riccati(seed in any::<u64>(), eta in -4.0f64..-0.2) {
        let env = random_env(seed);
        let tm = solve_b(&env, eta, (-10.0, 30.0)).unwrap();
        let lo = (2.0 * eta.abs()).sqrt();
        let hi = (2.0 * (env.es() - env.ei() + eta.abs())).sqrt();
        for &b in &tm.b_table().values {
            prop_assert!(b >= lo - BOUND_TOL && b <= hi + BOUND_TOL, "b = {b} outside [{lo}, {hi}]");
        }
        let h = tm.step();
        prop_assert!(tm.max_residual() <= 10.0 * h * h, "residual {} at h = {h}", tm.max_residual());
        let z = tm.ln_z_table();
        prop_assert!(z.values.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn residual_constant_is_stable_under_refinement() {
    let env = random_env(4);
    let c: Vec<f64> = [2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&h| {
            let tm = solve_b_with(&env, -1.0, (0.0, 30.0), SolveOptions { h, burn_in: None }).unwrap();
            tm.max_residual() / (tm.step() * tm.step())
        })
        .collect();
    assert!(c.iter().all(|v| *v < 10.0));
    assert!((c[2] / c[0] - 1.0).abs() < 0.1, "{c:?}");
}

#[test]
fn normaliser_matches_brownian_monte_carlo() {
    let env = random_env(1);
    let tm = solve_b(&env, -1.0, (-40.0, 10.0)).unwrap();
    let z = log_z(&tm, 0.0, 2.0).unwrap().exp();
    let hits = weighted_brownian_hits(&env, -1.0, 0.0, 2.0, 1e-3, z.ln() - 30.0, 10_000, 17).unwrap();
    let w: Vec<f64> = hits.iter().map(|h| h.weight).collect();
    let (m, se) = stats::mean_se(&w);
    assert!((m - z).abs() <= 3.0 * se, "MC {m} +- {se} vs Z {z}");
}

#[test]
fn girsanov_laws_agree() {
    // Flat case: both laws are inverse Gaussian with drift sqrt(2).
    let flat = Environment::constant(1.0, -150.0, 150.0);
    let tm = solve_b(&flat, -1.0, (-40.0, 10.0)).unwrap();
    let tilted = tilted_hitting_samples(&tm, 0.0, 2.0, 1e-3, 200.0, 5000, 3).unwrap();
    let h: Vec<f64> = tilted.iter().map(|s| s.h).collect();
    let ks = stats::ks_one_sample(&h, |t| stats::first_passage_cdf(t, 2.0, 2f64.sqrt()));
    assert!(ks < stats::ks_critical(0.01, 5000.0, f64::INFINITY), "tilted vs inverse Gaussian: {ks}");
    let r = girsanov_crosscheck(&tm, 0.0, 2.0, 5000, 1e-3, 1).unwrap();
    assert!(r.ks_passes() && r.weight_within(3.0), "{r:?}");

    for seed in [2, 5] {
        let env = random_env(seed);
        let tm = solve_b(&env, -1.0, (-40.0, 10.0)).unwrap();
        let r = girsanov_crosscheck(&tm, 0.0, 2.0, 5000, 1e-3, seed).unwrap();
        assert!(r.ks_passes(), "seed {seed}: {r:?}");
        assert!(r.weight_within(3.0), "seed {seed}: {r:?}");
    }
}

#[test]
fn mean_hitting_time_matches_tilted_monte_carlo() {
    let env = random_env(6);
    let tm = solve_b(&env, -1.0, (-40.0, 10.0)).unwrap();
    let exact = tm.expected_hitting_time(0.0, 5.0).unwrap();
    let samples = tilted_hitting_samples(&tm, 0.0, 5.0, 1e-3, 200.0, 10_000, 2).unwrap();
    assert!(samples.iter().all(|s| !s.censored));
    let h: Vec<f64> = samples.iter().map(|s| s.h).collect();
    let (m, se) = stats::mean_se(&h);
    assert!((m - exact).abs() <= 3.0 * se, "MC {m} +- {se} vs {exact}");
}

#[test]
fn calibration_meets_its_definition() {
    for seed in 0..3 {
        let env = random_env(seed);
        for v in [1.5, 2.5, 4.0] {
            let c = calibrate_eta(&env, 0.0, 20.0, v, SolveOptions::default()).unwrap();
            let Calibration::Tilt { eta, .. } = c else { panic!("no tilt for v = {v}") };
            let m = solve_b(&env, eta, (0.0, 20.0)).unwrap().expected_hitting_time(0.0, 20.0).unwrap();
            let target = 20.0 / v;
            assert!(((m - target) / target).abs() <= 1e-4, "seed {seed} v {v}: {m} vs {target}");
        }
    }
}

#[test]
fn eta_bar_decreases_in_speed() {
    let spec = EnvSpec::uniform_iid(0.5, 1.0, 0.0, 1.0);
    let env = annealed_environment(&spec, 200, 7).unwrap();
    let etas: Vec<f64> =
        [2.5, 3.0, 3.5, 4.0, 4.5].iter().map(|v| eta_bar_on(&env, *v, 200, SolveOptions::default()).unwrap()).collect();
    assert!(etas.windows(2).all(|w| w[1] < w[0]), "{etas:?}");
}

#[test]
fn tilted_law_is_sandwiched() {
    for seed in [0, 3] {
        let env = random_env(seed);
        let tm = solve_b(&env, -1.0, (-40.0, 40.0)).unwrap();
        let r = dominance_check(&tm, 0.0, 5.0, 10_000, 1e-3, seed).unwrap();
        assert!(r.ordered(), "{r:?}");
    }
}

#[test]
fn y_ratio_is_stable_under_translation() {
    let env = sample_environment(&EnvSpec::uniform_iid(0.5, 1.5, -150.0, 200.0), 3).unwrap();
    let v = 2.0;
    let ratios: Vec<f64> = [0.0, 10.0, 20.0, 30.0, 40.0]
        .iter()
        .map(|&x| {
            let y = x + 20.0;
            let eta = calibrate_eta(&env, x, y, v, SolveOptions::default()).unwrap().eta().unwrap();
            let tm = solve_b(&env, eta, (x - 30.0, y)).unwrap();
            y_functionals(&tm, x, y, v, 2.0, 10_000, default_dt(eta), 1).unwrap().ratio
        })
        .collect();
    let (min, max) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(max / min < 2.0, "{ratios:?}");
}

#[test]
fn barrier_inequalities_hold() {
    let spec = EnvSpec::uniform_iid(0.5, 1.0, -60.0, 70.0);
    let (v1, v2) = v1_v2(&spec, 200, 7).unwrap();
    let (t, v, k, l, eta): (f64, f64, f64, f64, f64) = (10.0, 5.0, 3.0, 1.0, -10.5);
    assert!(v > v2);
    // The tilt is weaker than the annealed one at speed v.
    assert!(eta > eta_bar(&spec, v, 200, 7).unwrap());
    // Regime of the lower-barrier bound: sqrt(2|eta|) > v1 (1 + 2L/K).
    assert!((2.0 * eta.abs()).sqrt() > v1 * (1.0 + 2.0 * l / k));
    for seed in 0..10 {
        let env = sample_environment(&spec, 100 + seed).unwrap();
        let tm = solve_b(&env, eta, (-20.0, 50.0)).unwrap();
        let p = BarrierParams { y: 50.0, t, v, v1, k, l };
        let s = barrier_event_stats(&tm, p, 4000, 2e-3, seed).unwrap();
        assert!(s.hit.p > 0.05, "seed {seed}: hit {:?}", s.hit);
        assert!(s.early.hi <= 0.25 * s.hit.lo, "seed {seed}: early {:?} hit {:?}", s.early, s.hit);
        assert!(s.early.hi <= s.late.lo / 3.0, "seed {seed}: early {:?} late {:?}", s.early, s.late);
        let bound = 2.0 * (s.early.p + 3.0 * s.early.se);
        assert!(s.hit_after_early_barrier.p <= bound, "seed {seed}: {:?}", s.hit_after_early_barrier);
    }
}
