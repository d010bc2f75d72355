use bbmre::env::{load_environment, sample_environment, save_environment, EnvSpec};
use bbmre::stats;
use proptest::prelude::*;

/// Additive recurrence with the golden ratio; low discrepancy on [0, 1).
fn weyl(i: usize) -> f64 {
    (0.5 + i as f64 * 0.618_033_988_749_894_8).fract()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potential_stays_in_ellipticity_band(
        seed in any::<u64>(),
        ei in 0.1f64..2.0,
        gap in 0.0f64..3.0,
        blocks in any::<bool>(),
    ) {
        let es = ei + gap;
        let spec = if blocks {
            EnvSpec::two_valued_blocks(ei, es, 5.0, 3.0, 1.5, 0.5, -50.0, 50.0)
        } else {
            EnvSpec::uniform_iid(ei, es, -50.0, 50.0)
        };
        let env = sample_environment(&spec, seed).unwrap();
        let (lo, hi) = env.domain();
        for i in 0..100_000 {
            let x = lo + (hi - lo) * weyl(i);
            let v = env.eval_potential(x).unwrap();
            prop_assert!(ei <= v && v <= es, "xi({x}) = {v} outside [{ei}, {es}]");
            // v - es is exact when es/2 <= v (Sterbenz); otherwise two roundings.
            let back = env.zeta(x).unwrap() + es;
            if 2.0 * ei >= es {
                prop_assert_eq!(back, v);
            } else {
                prop_assert!((back - v).abs() <= f64::EPSILON * es);
            }
        }
    }

    #[test]
    fn file_round_trip_is_exact(seed in any::<u64>(), ei in 0.1f64..1.0, gap in 0.0f64..2.0) {
        let env = sample_environment(&EnvSpec::uniform_iid(ei, ei + gap, -20.0, 30.0), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        save_environment(&env, &path).unwrap();
        let back = load_environment(&path).unwrap();
        prop_assert_eq!(back, env);
    }
}

#[test]
fn marginal_is_shift_stationary() {
    let spec = EnvSpec::uniform_iid(0.5, 1.5, -2.0, 12.0);
    let n = 10_000u64;
    let a: Vec<f64> = (0..n).map(|s| sample_environment(&spec, s).unwrap().eval_potential(0.3).unwrap()).collect();
    let b: Vec<f64> = (n..2 * n).map(|s| sample_environment(&spec, s).unwrap().eval_potential(7.8).unwrap()).collect();
    let (d, _) = stats::ks_two_sample(&a, &b);
    let crit = stats::ks_critical(0.01, n as f64, n as f64);
    assert!(d < crit, "KS {d} >= {crit}");
}

/// Length of `{x : f(x) > level}` for the linear interpolation of `knots`
/// at unit spacing, one segment per knot (the last wraps to the first).
fn cyclic_excursion(knots: &[f64], level: f64) -> f64 {
    let n = knots.len();
    (0..n)
        .map(|i| {
            let (a, b) = (knots[i], knots[(i + 1) % n]);
            match (a > level, b > level) {
                (true, true) => 1.0,
                (false, false) => 0.0,
                (true, false) => (a - level) / (a - b),
                (false, true) => (b - level) / (b - a),
            }
        })
        .sum()
}

#[test]
fn block_occupation_matches_renewal_fraction() {
    let (ei, es, mean, ramp) = (0.4, 1.0, 20usize, 2usize);
    // One renewal cycle at mean block lengths. The excursion length is
    // affine in both block lengths, so plugging in the means gives the
    // expected cycle contribution.
    let mut cycle = vec![es; mean];
    cycle.extend((1..ramp).map(|j| es + (ei - es) * j as f64 / ramp as f64));
    cycle.extend(std::iter::repeat_n(ei, mean));
    cycle.extend((1..ramp).map(|j| ei + (es - ei) * j as f64 / ramp as f64));
    let expected = cyclic_excursion(&cycle, 0.9) / cycle.len() as f64;

    let spec = EnvSpec::two_valued_blocks(ei, es, mean as f64, mean as f64, ramp as f64, 1.0, 0.0, 10_000.0);
    let env = sample_environment(&spec, 11).unwrap();
    // 20 batches of 500 units, 200 points each.
    let batches: Vec<f64> = (0..20)
        .map(|b| {
            let hits =
                (0..200).filter(|i| env.eval_potential(b as f64 * 500.0 + (*i as f64 + 0.5) * 2.5).unwrap() > 0.9);
            hits.count() as f64 / 200.0
        })
        .collect();
    let (m, se) = stats::mean_se(&batches);
    assert!((m - expected).abs() < 3.0 * se, "occupation {m} +- {se} vs {expected}");
}
