//! Random branching environments.
//!
//! A continuum [`Environment`] stores knot values on a uniform lattice of
//! spacing `dx` shifted by a random `phase`, and evaluates the potential by
//! linear interpolation. Every kind is bounded in `[ei, es]`, Lipschitz and
//! stationary in law under real shifts (thanks to the phase). The
//! [`LatticeEnvironment`] carries per-site branching rates for the
//! discrete-space model.

use crate::error::{invalid, Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FILE_VERSION: u32 = 1;

/// One-site marginal law, supported on `[ei, es]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Marginal {
    Uniform,
    /// `es` with probability `p_high`, else `ei`.
    TwoPoint {
        p_high: f64,
    },
}

impl Marginal {
    fn sample<R: Rng>(&self, ei: f64, es: f64, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform => ei + (es - ei) * rng.random::<f64>(),
            Marginal::TwoPoint { p_high } => {
                if rng.random::<f64>() < p_high {
                    es
                } else {
                    ei
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Marginal::TwoPoint { p_high } = *self {
            if !(0.0..=1.0).contains(&p_high) {
                return invalid(format!("p_high = {p_high} not in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvKind {
    /// `xi == es` everywhere.
    Constant,
    /// i.i.d. knot values, linearly interpolated.
    InterpolatedIid { marginal: Marginal },
    /// Alternating plateaus at `ei` and `es` with geometric lengths (mean
    /// lengths in x-units) joined by linear ramps of width `ramp`.
    TwoValuedBlocks { mean_low: f64, mean_high: f64, ramp: f64 },
    /// i.i.d. site rates for the nearest-neighbour lattice model with total
    /// jump rate `kappa`.
    LatticeIid { marginal: Marginal, kappa: f64 },
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Constant => "constant",
            EnvKind::InterpolatedIid { .. } => "interpolated-iid",
            EnvKind::TwoValuedBlocks { .. } => "two-valued-blocks",
            EnvKind::LatticeIid { .. } => "lattice-iid",
        }
    }
}

/// Law of the environment together with the window it is generated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(flatten)]
    pub kind: EnvKind,
    pub ei: f64,
    pub es: f64,
    pub dx: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl EnvSpec {
    pub fn constant(es: f64, x_lo: f64, x_hi: f64) -> Self {
        EnvSpec { kind: EnvKind::Constant, ei: es, es, dx: 1.0, x_lo, x_hi }
    }

    pub fn uniform_iid(ei: f64, es: f64, x_lo: f64, x_hi: f64) -> Self {
        EnvSpec { kind: EnvKind::InterpolatedIid { marginal: Marginal::Uniform }, ei, es, dx: 1.0, x_lo, x_hi }
    }

    pub fn two_valued_blocks(
        ei: f64,
        es: f64,
        mean_low: f64,
        mean_high: f64,
        ramp: f64,
        dx: f64,
        x_lo: f64,
        x_hi: f64,
    ) -> Self {
        EnvSpec { kind: EnvKind::TwoValuedBlocks { mean_low, mean_high, ramp }, ei, es, dx, x_lo, x_hi }
    }

    pub fn lattice_uniform(ei: f64, es: f64, kappa: f64, x_lo: i64, x_hi: i64) -> Self {
        EnvSpec {
            kind: EnvKind::LatticeIid { marginal: Marginal::Uniform, kappa },
            ei,
            es,
            dx: 1.0,
            x_lo: x_lo as f64,
            x_hi: x_hi as f64,
        }
    }

    pub fn with_window(mut self, x_lo: f64, x_hi: f64) -> Self {
        self.x_lo = x_lo;
        self.x_hi = x_hi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ei > 0.0 && self.ei.is_finite()) {
            return invalid(format!("ei = {} must be > 0", self.ei));
        }
        if !(self.es >= self.ei && self.es.is_finite()) {
            return invalid(format!("es = {} must satisfy ei <= es < inf", self.es));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return invalid(format!("dx = {} must be > 0", self.dx));
        }
        if !(self.x_hi > self.x_lo) {
            return invalid(format!("empty window [{}, {}]", self.x_lo, self.x_hi));
        }
        match &self.kind {
            EnvKind::Constant => {}
            EnvKind::InterpolatedIid { marginal } => marginal.validate()?,
            EnvKind::TwoValuedBlocks { mean_low, mean_high, ramp } => {
                if !(*ramp > 0.0) {
                    return invalid("ramp width must be > 0");
                }
                if !(*mean_low >= self.dx && *mean_high >= self.dx) {
                    return invalid("mean block lengths must be >= dx");
                }
            }
            EnvKind::LatticeIid { marginal, kappa } => {
                marginal.validate()?;
                if !(*kappa > 0.0) {
                    return invalid("kappa must be > 0");
                }
            }
        }
        Ok(())
    }
}

/// A sampled continuum potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvSpec,
    seed: u64,
    phase: f64,
    knots: Vec<f64>,
}

fn knot_count(spec: &EnvSpec, phase: f64) -> usize {
    ((spec.x_hi - spec.x_lo) / spec.dx + phase).ceil() as usize + 2
}

/// Draws a geometric length on {1, 2, ...} with the given mean.
fn geometric<R: Rng>(mean: f64, rng: &mut R) -> usize {
    let p = (1.0 / mean).min(1.0);
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (1.0 - p).ln()).floor() as usize
}

fn two_valued_knots<R: Rng>(
    spec: &EnvSpec,
    mean_low: f64,
    mean_high: f64,
    ramp: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let (lo, hi) = (spec.ei, spec.es);
    let r = (ramp / spec.dx).round().max(1.0) as usize;
    let (m_low, m_high) = (mean_low / spec.dx, mean_high / spec.dx);
    // Burn-in of several cycles before the first retained knot.
    let burn = (10.0 * (m_low + m_high + 2.0 * r as f64)).ceil() as usize;
    let mut high = rng.random::<f64>() < m_high / (m_low + m_high);
    let mut out = Vec::with_capacity(n + burn);
    while out.len() < n + burn {
        let (from, to, len) = if high { (hi, lo, geometric(m_high, rng)) } else { (lo, hi, geometric(m_low, rng)) };
        out.extend(std::iter::repeat_n(from, len));
        for j in 1..r {
            out.push(from + (to - from) * j as f64 / r as f64);
        }
        high = !high;
    }
    out.drain(..burn);
    out.truncate(n);
    out
}

/// Samples an environment; a deterministic function of `(spec, seed)`.
pub fn sample_environment(spec: &EnvSpec, seed: u64) -> Result<Environment> {
    spec.validate()?;
    let mut rng = rng::stream(seed, 0);
    let (phase, knots) = match &spec.kind {
        EnvKind::Constant => (0.0, vec![spec.es; knot_count(spec, 0.0)]),
        EnvKind::InterpolatedIid { marginal } => {
            let phase: f64 = rng.random();
            let n = knot_count(spec, phase);
            let knots = (0..n).map(|_| marginal.sample(spec.ei, spec.es, &mut rng)).collect();
            (phase, knots)
        }
        EnvKind::TwoValuedBlocks { mean_low, mean_high, ramp } => {
            let phase: f64 = rng.random();
            let n = knot_count(spec, phase);
            (phase, two_valued_knots(spec, *mean_low, *mean_high, *ramp, n, &mut rng))
        }
        EnvKind::LatticeIid { .. } => {
            return invalid("lattice-iid specs produce a LatticeEnvironment; use sample_lattice_environment");
        }
    };
    Ok(Environment { spec: spec.clone(), seed, phase, knots })
}

impl Environment {
    /// Builds an environment from explicit knot values; knot `i` sits at
    /// `x_lo + (i - phase) * dx`.
    pub fn from_knots(spec: EnvSpec, seed: u64, phase: f64, knots: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if !(0.0..1.0).contains(&phase) {
            return invalid(format!("phase {phase} not in [0, 1)"));
        }
        if knots.len() < knot_count(&spec, phase) - 1 {
            return invalid(format!("{} knots do not cover [{}, {}]", knots.len(), spec.x_lo, spec.x_hi));
        }
        if let Some(bad) = knots.iter().find(|v| !(spec.ei..=spec.es).contains(*v)) {
            return invalid(format!("knot value {bad} outside [{}, {}]", spec.ei, spec.es));
        }
        Ok(Environment { spec, seed, phase, knots })
    }

    pub fn constant(es: f64, x_lo: f64, x_hi: f64) -> Self {
        sample_environment(&EnvSpec::constant(es, x_lo, x_hi), 0).expect("valid constant spec")
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn phase(&self) -> f64 {
        self.phase
    }
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
    pub fn ei(&self) -> f64 {
        self.spec.ei
    }
    pub fn es(&self) -> f64 {
        self.spec.es
    }
    pub fn domain(&self) -> (f64, f64) {
        (self.spec.x_lo, self.spec.x_hi)
    }
    pub fn is_constant(&self) -> bool {
        self.spec.kind == EnvKind::Constant
    }

    /// Position of knot `i`.
    pub fn knot_position(&self, i: usize) -> f64 {
        self.spec.x_lo + (i as f64 - self.phase) * self.spec.dx
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.spec.x_lo && x <= self.spec.x_hi
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, lo: self.spec.x_lo, hi: self.spec.x_hi })
        }
    }

    pub fn eval_potential(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Interpolated value without the domain check; callers guarantee `x`
    /// lies in the window.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        let s = (x - self.spec.x_lo) / self.spec.dx + self.phase;
        let i = (s.floor().max(0.0) as usize).min(self.knots.len() - 2);
        let f = s - i as f64;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        (a + f * (b - a)).clamp(self.spec.ei, self.spec.es)
    }

    /// `zeta = xi - es`, valued in `[ei - es, 0]`.
    pub fn zeta(&self, x: f64) -> Result<f64> {
        Ok(self.eval_potential(x)? - self.spec.es)
    }

    /// Maximum slope of the interpolant over the knots.
    pub fn max_slope(&self) -> f64 {
        self.knots.windows(2).map(|w| (w[1] - w[0]).abs() / self.spec.dx).fold(0.0, f64::max)
    }

    /// Environment with potential multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return invalid("scale factor must be > 0");
        }
        let mut spec = self.spec.clone();
        spec.ei *= factor;
        spec.es *= factor;
        let knots = self.knots.iter().map(|v| v * factor).collect();
        Ok(Environment { spec, seed: self.seed, phase: self.phase, knots })
    }
}

/// Site rates for the discrete-space model. Particles jump to each
/// neighbour at rate `kappa / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEnvironment {
    spec: EnvSpec,
    seed: u64,
    x_min: i64,
    rates: Vec<f64>,
    kappa: f64,
}

pub fn sample_lattice_environment(spec: &EnvSpec, seed: u64) -> Result<LatticeEnvironment> {
    spec.validate()?;
    let EnvKind::LatticeIid { marginal, kappa } = spec.kind else {
        return invalid(format!("{} spec cannot produce a lattice environment", spec.kind.name()));
    };
    let x_min = spec.x_lo.floor() as i64;
    let x_max = spec.x_hi.ceil() as i64;
    let mut rng = rng::stream(seed, 0);
    let rates = (x_min..=x_max).map(|_| marginal.sample(spec.ei, spec.es, &mut rng)).collect();
    Ok(LatticeEnvironment { spec: spec.clone(), seed, x_min, rates, kappa })
}

impl LatticeEnvironment {
    pub fn from_rates(spec: EnvSpec, seed: u64, x_min: i64, rates: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let EnvKind::LatticeIid { kappa, .. } = spec.kind else {
            return invalid("lattice environment needs a lattice-iid spec");
        };
        if let Some(bad) = rates.iter().find(|v| !(spec.ei..=spec.es).contains(*v)) {
            return invalid(format!("site rate {bad} outside [{}, {}]", spec.ei, spec.es));
        }
        if rates.is_empty() {
            return invalid("no sites");
        }
        Ok(LatticeEnvironment { spec, seed, x_min, rates, kappa })
    }

    /// Homogeneous lattice with rate `rate` on sites `x_min..=x_max`.
    pub fn constant(rate: f64, kappa: f64, x_min: i64, x_max: i64) -> Result<Self> {
        let spec = EnvSpec::lattice_uniform(rate, rate, kappa, x_min, x_max);
        let n = (x_max - x_min + 1) as usize;
        Self::from_rates(spec, 0, x_min, vec![rate; n])
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn ei(&self) -> f64 {
        self.spec.ei
    }
    pub fn es(&self) -> f64 {
        self.spec.es
    }
    pub fn x_min(&self) -> i64 {
        self.x_min
    }
    pub fn x_max(&self) -> i64 {
        self.x_min + self.rates.len() as i64 - 1
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate(&self, x: i64) -> Result<f64> {
        if x < self.x_min || x > self.x_max() {
            return Err(Error::OutOfDomain { x: x as f64, lo: self.x_min as f64, hi: self.x_max() as f64 });
        }
        Ok(self.rates[(x - self.x_min) as usize])
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return invalid("scale factor must be > 0");
        }
        let mut spec = self.spec.clone();
        spec.ei *= factor;
        spec.es *= factor;
        let rates = self.rates.iter().map(|v| v * factor).collect();
        Ok(LatticeEnvironment { spec, seed: self.seed, x_min: self.x_min, rates, kappa: self.kappa })
    }
}

/// On-disk record shared by both environment flavours.
#[derive(Debug, Serialize, Deserialize)]
struct EnvFile {
    version: u32,
    #[serde(flatten)]
    spec: EnvSpec,
    phase: f64,
    seed: u64,
    knots: Vec<f64>,
}

fn write_file(path: &Path, file: &EnvFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<EnvFile> {
    let text = std::fs::read_to_string(path)?;
    let file: EnvFile = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if file.version != FILE_VERSION {
        return Err(Error::Format(format!("unsupported version {} (expected {FILE_VERSION})", file.version)));
    }
    Ok(file)
}

pub fn save_environment(env: &Environment, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &EnvFile {
            version: FILE_VERSION,
            spec: env.spec.clone(),
            phase: env.phase,
            seed: env.seed,
            knots: env.knots.clone(),
        },
    )
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment> {
    let f = read_file(path.as_ref())?;
    if matches!(f.spec.kind, EnvKind::LatticeIid { .. }) {
        return Err(Error::Format("file holds a lattice environment".into()));
    }
    Environment::from_knots(f.spec, f.seed, f.phase, f.knots)
}

pub fn save_lattice_environment(env: &LatticeEnvironment, path: impl AsRef<Path>) -> Result<()> {
    let mut spec = env.spec.clone();
    spec.x_lo = env.x_min as f64;
    spec.x_hi = env.x_max() as f64;
    write_file(
        path.as_ref(),
        &EnvFile { version: FILE_VERSION, spec, phase: 0.0, seed: env.seed, knots: env.rates.clone() },
    )
}

pub fn load_lattice_environment(path: impl AsRef<Path>) -> Result<LatticeEnvironment> {
    let f = read_file(path.as_ref())?;
    let x_min = f.spec.x_lo as i64;
    LatticeEnvironment::from_rates(f.spec, f.seed, x_min, f.knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knot_example(es: f64) -> Environment {
        let spec = EnvSpec {
            kind: EnvKind::InterpolatedIid { marginal: Marginal::Uniform },
            ei: 0.5,
            es,
            dx: 1.0,
            x_lo: 0.0,
            x_hi: 1.0,
        };
        Environment::from_knots(spec, 0, 0.0, vec![0.6, 1.0, 0.8]).unwrap()
    }

    #[test]
    fn constant_environment_is_flat() {
        let env = sample_environment(&EnvSpec::constant(1.0, -10.0, 10.0), 7).unwrap();
        assert_eq!(env.eval_potential(3.2).unwrap(), 1.0);
        assert_eq!(env.zeta(-4.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_interpolation_between_knots() {
        let env = knot_example(1.0);
        assert!((env.eval_potential(0.25).unwrap() - 0.7).abs() < 1e-15);
        assert!((env.zeta(0.25).unwrap() + 0.3).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let env = knot_example(1.0);
        assert!(matches!(env.eval_potential(1.5), Err(Error::OutOfDomain { .. })));
        assert!(env.eval_potential(-1e-9).is_err());
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = EnvSpec::uniform_iid(0.5, 1.5, 0.0, 10.0);
        spec.dx = 0.0;
        assert!(sample_environment(&spec, 1).is_err());
        assert!(sample_environment(&EnvSpec::uniform_iid(0.0, 1.0, 0.0, 10.0), 1).is_err());
        assert!(sample_environment(&EnvSpec::uniform_iid(1.0, 0.5, 0.0, 10.0), 1).is_err());
        let lat = EnvSpec::lattice_uniform(0.0, 1.0, 1.0, 0, 10);
        assert!(sample_lattice_environment(&lat, 1).is_err());
    }

    #[test]
    fn uniform_iid_knots_respect_support_and_slope() {
        let env = sample_environment(&EnvSpec::uniform_iid(0.5, 1.5, -50.0, 50.0), 1).unwrap();
        assert!(env.knots().iter().all(|v| (0.5..=1.5).contains(v)));
        assert!(env.max_slope() <= 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = EnvSpec::uniform_iid(0.5, 1.5, -50.0, 50.0);
        assert_eq!(sample_environment(&spec, 3).unwrap(), sample_environment(&spec, 3).unwrap());
        assert_ne!(sample_environment(&spec, 3).unwrap(), sample_environment(&spec, 4).unwrap());
    }

    #[test]
    fn lattice_rates_in_range() {
        let spec = EnvSpec::lattice_uniform(0.5, 2.0, 1.0, -20, 20);
        let env = sample_lattice_environment(&spec, 2).unwrap();
        assert_eq!(env.x_min(), -20);
        assert_eq!(env.x_max(), 20);
        assert!(env.rates().iter().all(|v| (0.5..=2.0).contains(v)));
        assert!(env.rate(21).is_err());
    }

    #[test]
    fn scaling_multiplies_bounds() {
        let env = knot_example(1.0).scaled(2.0).unwrap();
        assert_eq!(env.es(), 2.0);
        assert_eq!(env.ei(), 1.0);
        assert!((env.eval_potential(0.25).unwrap() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn corrupted_or_invalid_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        let env = sample_environment(&EnvSpec::uniform_iid(0.5, 1.5, 0.0, 20.0), 5).unwrap();
        save_environment(&env, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
        assert!(matches!(load_environment(&path), Err(Error::Format(_))));

        std::fs::write(&path, "{ not json").unwrap();
        assert!(load_environment(&path).is_err());

        std::fs::write(&path, text.replace("\"es\": 1.5", "\"es\": 0.2")).unwrap();
        assert!(load_environment(&path).is_err());
    }
}
