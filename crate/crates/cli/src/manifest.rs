//! Run manifests: the resolved configuration and artifact checksums of
//! every command, written atomically so a run can be replayed bit for bit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    /// Subcommand name, e.g. `gen-synth`.
    pub command: String,
    /// Fully resolved arguments (flag > config file > default).
    pub args: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(hex(&digest))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_refs(paths: &[PathBuf]) -> Result<Vec<FileRef>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileRef {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Collects timing and file references for one command run.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    args: serde_json::Value,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new<A: Serialize>(command: &str, args: &A, seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            args: serde_json::to_value(args).expect("args serialize"),
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    /// Writes the manifest (atomically: temp file + rename) next to the
    /// run's outputs.
    pub fn finish(self, outputs: &[PathBuf], manifest_path: &Path) -> Result<()> {
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            command: self.command,
            args: self.args,
            seed: self.seed,
            inputs: file_refs(&self.inputs)?,
            outputs: file_refs(outputs)?,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let tmp = manifest_path.with_extension("json.tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, manifest_path)?;
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
