//! Exact Monte Carlo of the branching system.
//!
//! Continuum particles move as standard Brownian motions and branch at rate
//! `xi(X)`; the branching clock is realised by thinning a rate-`es` Poisson
//! clock, so positions are only sampled (exactly) at clock ticks and at the
//! final time. Lattice particles jump to each neighbour at rate `kappa / 2`
//! and branch at the site rate.

use crate::env::{Environment, LatticeEnvironment};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};
use crate::stats;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const DEFAULT_PARTICLE_CAP: usize = 10_000_000;

/// Offspring law `(p_k)_{k >= 1}`; `probs[i]` is the probability of `i + 1`
/// children. Death (`p_0`) is not supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringDistribution {
    probs: Vec<f64>,
}

impl OffspringDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty offspring law");
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid("offspring probabilities must be finite and >= 0");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("offspring probabilities sum to {total}, not 1"));
        }
        let d = OffspringDistribution { probs };
        if !(d.mean() > 1.0) {
            return invalid(format!("mean offspring {} must exceed 1", d.mean()));
        }
        Ok(d)
    }

    /// Binary branching, `p_2 = 1`.
    pub fn binary() -> Self {
        OffspringDistribution { probs: vec![0.0, 1.0] }
    }

    /// Law with `p_k` given as `(k, p_k)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let kmax = pairs.iter().map(|p| p.0).max().unwrap_or(0);
        if pairs.iter().any(|p| p.0 == 0) {
            return invalid("p_0 > 0 is not supported");
        }
        let mut probs = vec![0.0; kmax];
        for &(k, p) in pairs {
            probs[k - 1] += p;
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p_k`.
    pub fn p(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.probs.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| ((i + 1) as f64).powi(2) * p).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.mean() - 2.0).abs() < 1e-12
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        // Rounding slack: the largest atom.
        self.probs.iter().rposition(|p| *p > 0.0).map_or(1, |i| i + 1)
    }

    /// Law with mean two together with the factor `mu - 1` by which the
    /// potential has to be multiplied to keep the process law unchanged.
    pub fn normalized(&self) -> (OffspringDistribution, f64) {
        let mu = self.mean();
        if self.is_normalized() {
            return (self.clone(), 1.0);
        }
        let f = mu - 1.0;
        let mut probs: Vec<f64> = self.probs.iter().map(|p| p / f).collect();
        probs[0] = (mu + self.probs[0] - 2.0) / f;
        (OffspringDistribution { probs }, f)
    }
}

/// Rescales offspring law and potential to the mean-two normalisation.
pub fn normalize_offspring(
    dist: &OffspringDistribution,
    env: &Environment,
) -> Result<(OffspringDistribution, Environment)> {
    if !(dist.mean() > 1.0) {
        return invalid("mean offspring must exceed 1");
    }
    let (d, f) = dist.normalized();
    if f == 1.0 {
        return Ok((d, env.clone()));
    }
    Ok((d, env.scaled(f)?))
}

pub fn normalize_offspring_lattice(
    dist: &OffspringDistribution,
    env: &LatticeEnvironment,
) -> Result<(OffspringDistribution, LatticeEnvironment)> {
    let (d, f) = dist.normalized();
    if f == 1.0 {
        return Ok((d, env.clone()));
    }
    Ok((d, env.scaled(f)?))
}

/// State of the system at the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeResult {
    pub positions: Vec<f64>,
    pub max: f64,
    pub population: usize,
    pub branch_events: usize,
    pub truncated: bool,
}

impl TreeResult {
    fn from_positions(positions: Vec<f64>, branch_events: usize, truncated: bool) -> Self {
        let max = positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TreeResult { population: positions.len(), positions, max, branch_events, truncated }
    }
}

/// Pending particle keyed by the time of its next event; ties by id.
#[derive(Debug, Clone, Copy)]
struct Pending<P> {
    time: f64,
    id: u64,
    pos: P,
}

impl<P> PartialEq for Pending<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<P> Eq for Pending<P> {}
impl<P> PartialOrd for Pending<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Pending<P> {
    // min-heap on (time, id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.id.cmp(&self.id))
    }
}

enum Tick {
    /// The clock rings after `t`; the particle ends at this position.
    Done(f64),
    At {
        now: f64,
        x: f64,
        branch: bool,
    },
}

/// Next tick of the dominating rate-`es` clock for a particle at `pos` at
/// `time`. The Brownian increment over the waiting time is exact, and the
/// tick is a branching with probability `xi(x)/es`.
fn tick(env: &Environment, es: f64, time: f64, pos: f64, t: f64, rng: &mut Stream) -> Result<Tick> {
    let wait: f64 = Exp1.sample(rng);
    let wait = wait / es;
    if time + wait >= t {
        let z: f64 = StandardNormal.sample(rng);
        return Ok(Tick::Done(pos + (t - time).sqrt() * z));
    }
    let z: f64 = StandardNormal.sample(rng);
    let x = pos + wait.sqrt() * z;
    let xi = env.eval_potential(x)?;
    Ok(Tick::At { now: time + wait, x, branch: rng.random::<f64>() * es < xi })
}

/// One exact sample of the continuum system at time `t`.
pub fn simulate_tree_with(
    env: &Environment,
    dist: &OffspringDistribution,
    x0: f64,
    t: f64,
    rng: &mut Stream,
    particle_cap: usize,
) -> Result<TreeResult> {
    if !(t >= 0.0) {
        return invalid("t must be >= 0");
    }
    env.check_domain(x0)?;
    let es = env.es();
    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Pending { time: 0.0, id: next_id, pos: x0 });
    next_id += 1;
    let mut done = Vec::new();
    let mut branch_events = 0usize;

    while let Some(Pending { time, pos, .. }) = heap.pop() {
        match tick(env, es, time, pos, t, rng)? {
            Tick::Done(x) => done.push(x),
            Tick::At { now, x, branch: true } => {
                branch_events += 1;
                let k = dist.sample(rng);
                if done.len() + heap.len() + k > particle_cap {
                    done.extend(heap.drain().map(|p| p.pos));
                    done.push(x);
                    return Ok(TreeResult::from_positions(done, branch_events, true));
                }
                for _ in 0..k {
                    heap.push(Pending { time: now, id: next_id, pos: x });
                    next_id += 1;
                }
            }
            Tick::At { now, x, branch: false } => {
                heap.push(Pending { time: now, id: next_id, pos: x });
                next_id += 1;
            }
        }
    }
    Ok(TreeResult::from_positions(done, branch_events, false))
}

/// Branching times along a single line of descent from `x0`, up to time `t`
/// or the first `max_events` of them, with the same thinning as the tree.
pub fn lineage_branch_times(
    env: &Environment,
    x0: f64,
    t: f64,
    max_events: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return invalid("t must be >= 0");
    }
    env.check_domain(x0)?;
    let es = env.es();
    let (mut time, mut pos) = (0.0, x0);
    let mut out = Vec::new();
    while out.len() < max_events {
        match tick(env, es, time, pos, t, rng)? {
            Tick::Done(_) => break,
            Tick::At { now, x, branch } => {
                if branch {
                    out.push(now);
                }
                time = now;
                pos = x;
            }
        }
    }
    Ok(out)
}

/// Exact sample at time `t` from a single seed.
pub fn simulate_tree(
    env: &Environment,
    dist: &OffspringDistribution,
    x0: f64,
    t: f64,
    seed: u64,
    particle_cap: usize,
) -> Result<TreeResult> {
    simulate_tree_with(env, dist, x0, t, &mut rng::stream(seed, 0), particle_cap)
}

/// Exact sample of the lattice system via competing exponential clocks.
pub fn simulate_lattice_tree_with(
    env: &LatticeEnvironment,
    dist: &OffspringDistribution,
    x0: i64,
    t: f64,
    rng: &mut Stream,
    particle_cap: usize,
) -> Result<TreeResult> {
    if !(t >= 0.0) {
        return invalid("t must be >= 0");
    }
    if !(env.ei() > 0.0) {
        return invalid("lattice rates must be > 0");
    }
    env.rate(x0)?;
    let kappa = env.kappa();
    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Pending { time: 0.0, id: next_id, pos: x0 });
    next_id += 1;
    let mut done: Vec<f64> = Vec::new();
    let mut branch_events = 0usize;

    while let Some(Pending { time, pos, .. }) = heap.pop() {
        let xi = env.rate(pos)?;
        let total = kappa + xi;
        let wait: f64 = Exp1.sample(rng);
        let now = time + wait / total;
        if now >= t {
            done.push(pos as f64);
            continue;
        }
        if rng.random::<f64>() * total < kappa {
            let step = if rng.random::<bool>() { 1 } else { -1 };
            heap.push(Pending { time: now, id: next_id, pos: pos + step });
            next_id += 1;
        } else {
            branch_events += 1;
            let k = dist.sample(rng);
            if done.len() + heap.len() + k > particle_cap {
                done.extend(heap.drain().map(|p| p.pos as f64));
                done.push(pos as f64);
                return Ok(TreeResult::from_positions(done, branch_events, true));
            }
            for _ in 0..k {
                heap.push(Pending { time: now, id: next_id, pos });
                next_id += 1;
            }
        }
    }
    Ok(TreeResult::from_positions(done, branch_events, false))
}

pub fn simulate_lattice_tree(
    env: &LatticeEnvironment,
    dist: &OffspringDistribution,
    x0: i64,
    t: f64,
    seed: u64,
    particle_cap: usize,
) -> Result<TreeResult> {
    simulate_lattice_tree_with(env, dist, x0, t, &mut rng::stream(seed, 0), particle_cap)
}

/// Per-replicate summary, the row format of the samples CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub replicate: u64,
    pub t: f64,
    pub max: f64,
    pub population: usize,
    pub truncated: bool,
}

/// Where the replicates start and which model they run.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Continuum(&'a Environment, f64),
    Lattice(&'a LatticeEnvironment, i64),
}

/// Runs `n_rep` independent replicates (stream `i` for replicate `i`),
/// returned in replicate order.
pub fn sample_maxima(
    model: Model<'_>,
    dist: &OffspringDistribution,
    t: f64,
    n_rep: usize,
    seed: u64,
    particle_cap: usize,
) -> Result<Vec<ReplicateSummary>> {
    (0..n_rep as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let r = match model {
                Model::Continuum(env, x0) => simulate_tree_with(env, dist, x0, t, &mut rng, particle_cap)?,
                Model::Lattice(env, x0) => simulate_lattice_tree_with(env, dist, x0, t, &mut rng, particle_cap)?,
            };
            Ok(ReplicateSummary { replicate: i, t, max: r.max, population: r.population, truncated: r.truncated })
        })
        .collect()
}

/// Empirical quantiles of `M(t)` with order-statistic confidence bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub t: f64,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub replicates: usize,
}

/// `inf{y : F_n(y) >= eps}` with a 95% distribution-free band from the
/// binomial law of the order statistics.
pub fn empirical_quantiles(samples: &[f64], levels: &[f64], t: f64) -> Result<QuantileEstimate> {
    let n = samples.len();
    if n < 100 {
        return invalid(format!("need at least 100 replicates, got {n}"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let z = 1.959_963_984_540_054;
    let mut values = Vec::with_capacity(levels.len());
    let mut half_widths = Vec::with_capacity(levels.len());
    for &eps in levels {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Quantile { eps, reason: "level must lie in (0, 1)".into() });
        }
        let spread = z * (nf * eps * (1.0 - eps)).sqrt();
        let lo = (nf * eps - spread).floor();
        let hi = (nf * eps + spread).ceil();
        if lo < 1.0 || hi > nf {
            return Err(Error::Quantile { eps, reason: format!("order statistics {lo}..{hi} outside 1..{n}") });
        }
        let k = ((nf * eps).ceil() as usize).clamp(1, n);
        let m = xs[k - 1];
        values.push(m);
        half_widths.push((xs[hi as usize - 1] - m).max(m - xs[lo as usize - 1]));
    }
    Ok(QuantileEstimate { t, levels: levels.to_vec(), values, half_widths, replicates: n })
}

/// Monte Carlo quantiles of the maximum; any truncated replicate aborts.
pub fn max_quantiles_mc(
    model: Model<'_>,
    dist: &OffspringDistribution,
    t: f64,
    n_rep: usize,
    levels: &[f64],
    seed: u64,
) -> Result<QuantileEstimate> {
    if n_rep < 100 {
        return invalid(format!("need at least 100 replicates, got {n_rep}"));
    }
    let reps = sample_maxima(model, dist, t, n_rep, seed, DEFAULT_PARTICLE_CAP)?;
    if let Some(r) = reps.iter().find(|r| r.truncated) {
        return Err(Error::Truncated(r.replicate));
    }
    let maxima: Vec<f64> = reps.iter().map(|r| r.max).collect();
    empirical_quantiles(&maxima, levels, t)
}

/// `P(M(t) >= y)` estimated from replicate maxima.
pub fn exceedance(reps: &[ReplicateSummary], y: f64) -> stats::Proportion {
    let hits = reps.iter().filter(|r| r.max >= y).count();
    stats::Proportion::from_counts(hits, reps.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalisation_of_ternary_law() {
        let env = Environment::constant(1.0, -10.0, 10.0);
        let d = OffspringDistribution::from_pairs(&[(3, 1.0)]).unwrap();
        let (nd, nenv) = normalize_offspring(&d, &env).unwrap();
        assert!((nd.p(1) - 0.5).abs() < 1e-15);
        assert!((nd.p(3) - 0.5).abs() < 1e-15);
        assert!((nd.mean() - 2.0).abs() < 1e-15);
        assert!(nd.second_moment() > 2.0);
        assert_eq!(nenv.eval_potential(0.0).unwrap(), 2.0);
        assert_eq!(nenv.es(), 2.0);
    }

    #[test]
    fn normalisation_is_identity_at_mean_two() {
        let env = Environment::constant(1.0, -10.0, 10.0);
        for d in [OffspringDistribution::binary(), OffspringDistribution::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap()] {
            let (nd, nenv) = normalize_offspring(&d, &env).unwrap();
            assert_eq!(nd, d);
            assert_eq!(nenv, env);
        }
    }

    #[test]
    fn subcritical_laws_are_rejected() {
        assert!(OffspringDistribution::from_pairs(&[(1, 1.0)]).is_err());
        assert!(OffspringDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(OffspringDistribution::from_pairs(&[(0, 0.1), (2, 0.9)]).is_err());
    }

    #[test]
    fn zero_time_tree_is_the_root() {
        let env = Environment::constant(1.0, -10.0, 10.0);
        let r = simulate_tree(&env, &OffspringDistribution::binary(), 1.5, 0.0, 3, 100).unwrap();
        assert_eq!(r.population, 1);
        assert_eq!(r.max, 1.5);
        let lat = LatticeEnvironment::constant(1.0, 1.0, -5, 5).unwrap();
        let r = simulate_lattice_tree(&lat, &OffspringDistribution::binary(), 2, 0.0, 3, 100).unwrap();
        assert_eq!((r.population, r.max), (1, 2.0));
    }

    #[test]
    fn tree_is_reproducible() {
        let env = Environment::constant(1.0, -50.0, 50.0);
        let d = OffspringDistribution::binary();
        let a = simulate_tree(&env, &d, 0.0, 2.0, 11, 1000).unwrap();
        let b = simulate_tree(&env, &d, 0.0, 2.0, 11, 1000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.max, a.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn cap_flags_truncation() {
        let env = Environment::constant(1.0, -100.0, 100.0);
        let r = simulate_tree(&env, &OffspringDistribution::binary(), 0.0, 8.0, 1, 50).unwrap();
        assert!(r.truncated);
    }

    #[test]
    fn domain_exit_is_an_error() {
        let env = Environment::constant(1.0, -1.0, 1.0);
        let r = simulate_tree(&env, &OffspringDistribution::binary(), 0.0, 20.0, 1, 1000);
        assert!(matches!(r, Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn quantile_resolution_guard() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(empirical_quantiles(&xs, &[0.999], 1.0), Err(Error::Quantile { .. })));
        let q = empirical_quantiles(&xs, &[0.25, 0.5, 0.75], 1.0).unwrap();
        assert!(q.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(q.values[1], 49.0);
    }
}
