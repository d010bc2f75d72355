use serde::{Deserialize, Serialize};

/// Outcome of one assertion made by an experiment. `criterion` links the
/// check to a numbered acceptance criterion when it implements one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub criterion: Option<u32>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub config: String,
    pub tool_version: String,
    pub csv_schema: u32,
    pub wall_clock_seconds: f64,
    pub stages: Vec<Stage>,
    pub outputs: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn checksum(&self, path: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.path == path).map(|o| o.sha256.as_str())
    }

    pub fn csv_files(&self) -> impl Iterator<Item = &OutputFile> {
        self.outputs.iter().filter(|o| o.path.ends_with(".csv"))
    }
}
