//! Experiment runner: configs in, CSV tables, SVG plots and a manifest out.
//!
//! Each run writes into its own directory under an output root. Files are
//! written as soon as they are produced; if a stage fails, a `PARTIAL` file
//! holding the error is left next to whatever was already written, and no
//! manifest is produced.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod svg;
pub mod table;

pub use config::Config;
pub use error::{Error, Result};
pub use experiments::Experiment;
pub use manifest::{Check, RunManifest};

use manifest::{OutputFile, Stage};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;
use svg::Plot;
use table::Table;

/// Environment variable naming the output root for the CLI.
pub const OUTPUT_ROOT_VAR: &str = "BBMRE_OUT";
pub const CSV_SCHEMA: u32 = 1;
const PARTIAL: &str = "PARTIAL";

/// Mutable state of a run, handed to the experiment.
pub struct Run<'a> {
    pub config: &'a Config,
    dir: PathBuf,
    stages: Vec<Stage>,
    outputs: Vec<OutputFile>,
    checks: Vec<Check>,
    warnings: Vec<String>,
}

impl Run<'_> {
    /// Seed of the next named stage, derived from the master seed.
    pub fn stage(&mut self, name: &str) -> u64 {
        let seed = bbmre::rng::derive_seed(self.config.seed, self.stages.len() as u64 + 1);
        self.stages.push(Stage { name: name.into(), seed });
        seed
    }

    /// Records a stage whose seed comes straight from the config.
    pub fn fixed_stage(&mut self, name: &str, seed: u64) {
        self.stages.push(Stage { name: name.into(), seed });
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.outputs.push(OutputFile { path: name.into(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(&format!("{name}.csv"), &table.to_csv_bytes()?)
    }

    pub fn plot(&mut self, name: &str, plot: &Plot) -> Result<()> {
        let svg = plot.render(&self.config.hash())?;
        self.write(&format!("{name}.svg"), svg.as_bytes())
    }

    pub fn check(&mut self, name: &str, criterion: Option<u32>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), criterion, passed, detail: detail.into() });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

/// Directory of a run below `root`: the configured name, else
/// `<experiment>-<first 12 hash digits>`.
pub fn run_dir(config: &Config, root: &Path) -> PathBuf {
    match &config.output {
        Some(name) => root.join(name),
        None => root.join(format!("{}-{}", config.experiment.name(), &config.hash()[..12])),
    }
}

/// Output root from [`OUTPUT_ROOT_VAR`], defaulting to `lab-output`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("lab-output"))
}

pub fn run(config: &Config, root: &Path) -> Result<RunManifest> {
    let dir = run_dir(config, root);
    std::fs::create_dir_all(&dir)?;
    for stale in [PARTIAL, "manifest.json"] {
        let p = dir.join(stale);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    let start = Instant::now();
    let mut run = Run {
        config,
        dir: dir.clone(),
        stages: Vec::new(),
        outputs: Vec::new(),
        checks: Vec::new(),
        warnings: Vec::new(),
    };
    if let Err(e) = experiments::execute(&mut run) {
        let written: Vec<&str> = run.outputs.iter().map(|o| o.path.as_str()).collect();
        let note = format!("error: {e}\nwritten before the error: {}\n", written.join(", "));
        std::fs::write(dir.join(PARTIAL), note)?;
        return Err(e);
    }
    let manifest = RunManifest {
        experiment: config.experiment.name().into(),
        config_hash: config.hash(),
        config: config.canonical_text(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        csv_schema: CSV_SCHEMA,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        stages: run.stages,
        outputs: run.outputs,
        checks: run.checks,
        warnings: run.warnings,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Verdict on one acceptance criterion, gathered over the checks that
/// carry its number.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub criterion: u32,
    pub passed: bool,
    pub details: Vec<String>,
}

/// Groups the numbered checks of `manifests` by criterion. A criterion
/// passes when it has at least one check and all of them pass.
pub fn criteria(manifests: &[RunManifest]) -> Vec<CriterionResult> {
    let mut numbers: Vec<u32> = manifests.iter().flat_map(|m| m.checks.iter().filter_map(|c| c.criterion)).collect();
    numbers.sort_unstable();
    numbers.dedup();
    numbers
        .into_iter()
        .map(|n| {
            let checks: Vec<&Check> =
                manifests.iter().flat_map(|m| m.checks.iter()).filter(|c| c.criterion == Some(n)).collect();
            CriterionResult {
                criterion: n,
                passed: checks.iter().all(|c| c.passed),
                details: checks
                    .iter()
                    .map(|c| format!("{}{}: {}", if c.passed { "" } else { "FAILED " }, c.name, c.detail))
                    .collect(),
            }
        })
        .collect()
}

/// One line per check: `PASS name: detail` or `FAIL name: detail`.
pub fn check_lines(manifest: &RunManifest) -> Vec<String> {
    manifest
        .checks
        .iter()
        .map(|c| {
            let tag = match c.criterion {
                Some(n) => format!(" [criterion {n}]"),
                None => String::new(),
            };
            format!("{} {}{tag}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_duality() -> Config {
        Config::new(Experiment::Duality, 5)
            .with("trees", 400)
            .unwrap()
            .with("t", 1.0)
            .unwrap()
            .with("y_max", 2.0)
            .unwrap()
    }

    #[test]
    fn duality_run_lists_three_tables() {
        let root = tempfile::tempdir().unwrap();
        let m = run(&small_duality(), root.path()).unwrap();
        assert_eq!(m.csv_files().count(), 3);
        let dir = run_dir(&small_duality(), root.path());
        assert!(dir.join("manifest.json").exists());
        assert!(!dir.join(PARTIAL).exists());
        for o in &m.outputs {
            let bytes = std::fs::read(dir.join(&o.path)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), o.sha256);
        }
        assert!(m.stages.iter().all(|s| s.seed != 5));
        assert_eq!(check_lines(&m).len(), m.checks.len());
    }

    #[test]
    fn criteria_need_every_check() {
        let check = |n, passed| Check { name: "c".into(), criterion: Some(n), passed, detail: String::new() };
        let mut m = run(&small_duality(), tempfile::tempdir().unwrap().path()).unwrap();
        m.checks = vec![check(3, true), check(3, false), check(4, true)];
        let r = criteria(&[m]);
        assert_eq!(r.len(), 2);
        assert!(!r[0].passed && r[1].passed);
    }

    #[test]
    fn rerun_reproduces_checksums() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = run(&small_duality(), a.path()).unwrap();
        let mb = run(&small_duality(), b.path()).unwrap();
        assert_eq!(ma.outputs, mb.outputs);
        assert_eq!(ma.config_hash, mb.config_hash);
        let other = small_duality().with("trees", 401).unwrap();
        let mc = run(&other, a.path()).unwrap();
        assert_ne!(mc.config_hash, ma.config_hash);
    }

    #[test]
    fn failing_stage_leaves_a_partial_marker() {
        let root = tempfile::tempdir().unwrap();
        // Too few trees for the order-statistic bands, after the tables are out.
        let bad = small_duality().with("trees", 50).unwrap();
        assert!(run(&bad, root.path()).is_err());
        let dir = run_dir(&bad, root.path());
        assert!(dir.join(PARTIAL).exists());
        assert!(!dir.join("manifest.json").exists());
        let note = std::fs::read_to_string(dir.join(PARTIAL)).unwrap();
        assert!(note.contains("duality_exceedance.csv"), "{note}");
    }
}
