//! The `manifest.json` written once into every output directory.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn hash(path: &Path) -> CliResult<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(Self { path: path.to_path_buf(), sha256: hex(&Sha256::digest(&data)), bytes: data.len() as u64 })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
    /// Command-specific results, e.g. averaged metrics.
    #[serde(default)]
    pub summary: serde_json::Value,
}

/// Tracks a command's files while it runs.
pub struct Run {
    pub out: PathBuf,
    pub command: String,
    pub config: RunConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    started_unix: u64,
    pub summary: serde_json::Value,
}

impl Run {
    pub fn new(command: &str, out: &Path, config: RunConfig) -> Self {
        Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `contents` to `out/name` and records it.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn finish(self) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config: self.config,
            inputs: self.inputs.iter().map(|p| Artifact::hash(p)).collect::<CliResult<_>>()?,
            outputs: self.outputs.iter().map(|p| Artifact::hash(p)).collect::<CliResult<_>>()?,
            started_unix: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            summary: self.summary,
        };
        let path = self.out.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::runtime(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(Artifact::hash(&p).unwrap().sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
