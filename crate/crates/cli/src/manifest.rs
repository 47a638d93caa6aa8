//! Run manifests: every output file gets a `<file>.manifest.json` sidecar
//! recording the command line, the resolved configuration, input hashes,
//! seeds, tool version, and wall-clock duration, so any artifact can be
//! traced back to an exact, re-runnable invocation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
struct FileStamp {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct ManifestFile {
    tool: &'static str,
    version: &'static str,
    command: Vec<String>,
    config: serde_json::Value,
    seeds: serde_json::Value,
    inputs: Vec<FileStamp>,
    outputs: Vec<FileStamp>,
    duration_seconds: f64,
}

pub struct RunManifest {
    started: Instant,
    command: Vec<String>,
    config: serde_json::Value,
    seeds: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            started: Instant::now(),
            command,
            config: serde_json::Value::Null,
            seeds: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn set_seeds(&mut self, seeds: serde_json::Value) {
        self.seeds = seeds;
    }

    pub fn record_input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write one sidecar per recorded output. No outputs, no sidecars.
    pub fn finalize(self) -> Result<()> {
        if self.outputs.is_empty() {
            return Ok(());
        }
        let stamp = |paths: &[PathBuf]| -> Result<Vec<FileStamp>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileStamp {
                        path: p.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let file = ManifestFile {
            tool: "vvc",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            config: self.config.clone(),
            seeds: self.seeds.clone(),
            inputs: stamp(&self.inputs)?,
            outputs: stamp(&self.outputs)?,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&file).expect("manifest serializes");
        for out in &self.outputs {
            let mut sidecar = out.as_os_str().to_owned();
            sidecar.push(".manifest.json");
            let sidecar = PathBuf::from(sidecar);
            std::fs::write(&sidecar, &text).map_err(|source| CliError::Write {
                path: sidecar.clone(),
                source,
            })?;
        }
        Ok(())
    }
}
