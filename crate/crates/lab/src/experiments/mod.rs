//! The experiments. Each one declares its documented keys and writes its
//! tables, plots and checks into a [`Run`].

mod duality;
mod figure1;
mod front_contrast;
mod perturbation;
mod speed;
mod sturmian;
mod tilt_suite;

use crate::config::Key;
use crate::error::{Error, Result};
use crate::Run;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    Duality,
    HomogeneousSpeed,
    Figure1,
    FrontContrast,
    SturmianSuite,
    PerturbationCheck,
    TiltSuite,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Duality,
        Experiment::HomogeneousSpeed,
        Experiment::TiltSuite,
        Experiment::SturmianSuite,
        Experiment::Figure1,
        Experiment::FrontContrast,
        Experiment::PerturbationCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Duality => "duality",
            Experiment::HomogeneousSpeed => "homogeneous-speed",
            Experiment::Figure1 => "figure1",
            Experiment::FrontContrast => "front-contrast",
            Experiment::SturmianSuite => "sturmian-suite",
            Experiment::PerturbationCheck => "perturbation-check",
            Experiment::TiltSuite => "tilt-suite",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name).ok_or_else(|| Error::UnknownExperiment(name.into()))
    }

    pub fn keys(self) -> &'static [Key] {
        match self {
            Experiment::Duality => duality::KEYS,
            Experiment::HomogeneousSpeed => speed::KEYS,
            Experiment::Figure1 => figure1::KEYS,
            Experiment::FrontContrast => front_contrast::KEYS,
            Experiment::SturmianSuite => sturmian::KEYS,
            Experiment::PerturbationCheck => perturbation::KEYS,
            Experiment::TiltSuite => tilt_suite::KEYS,
        }
    }

    /// Acceptance criteria whose checks this experiment produces.
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Experiment::Duality => &[1],
            Experiment::HomogeneousSpeed => &[2],
            Experiment::TiltSuite => &[3, 4, 5, 6, 8],
            Experiment::SturmianSuite => &[7, 9],
            Experiment::Figure1 => &[10],
            Experiment::FrontContrast => &[11],
            Experiment::PerturbationCheck => &[12],
        }
    }
}

pub(crate) fn execute(run: &mut Run<'_>) -> Result<()> {
    match run.config.experiment {
        Experiment::Duality => duality::run(run),
        Experiment::HomogeneousSpeed => speed::run(run),
        Experiment::Figure1 => figure1::run(run),
        Experiment::FrontContrast => front_contrast::run(run),
        Experiment::SturmianSuite => sturmian::run(run),
        Experiment::PerturbationCheck => perturbation::run(run),
        Experiment::TiltSuite => tilt_suite::run(run),
    }
}

/// `lo, lo + step, ...` up to `hi` inclusive (within rounding).
pub(crate) fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

pub(crate) fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_criteria_cover_all() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()).unwrap(), e);
        }
        let mut all: Vec<u32> = Experiment::ALL.iter().flat_map(|e| e.criteria().iter().copied()).collect();
        all.sort();
        assert_eq!(all, (1..=12).collect::<Vec<_>>());
        assert!(matches!(Experiment::from_name("figure-1"), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn every_default_is_valid_toml() {
        for e in Experiment::ALL {
            let c = crate::Config::new(e, 1);
            assert!(!c.canonical_text().is_empty());
            let mut names: Vec<&str> = e.keys().iter().map(|k| k.name).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), e.keys().len(), "{} has duplicate keys", e.name());
        }
    }

    #[test]
    fn grid_includes_end_point() {
        assert_eq!(grid(0.0, 1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid(20.0, 40.0, 1.0).len(), 21);
    }
}
