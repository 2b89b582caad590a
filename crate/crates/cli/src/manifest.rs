//! Run manifests: the resolved config plus a digest of every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub seeds: serde_json::Value,
    pub config: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Collects the artifacts written by a command, in path order.
pub fn collect(out: &Path, files: &[PathBuf]) -> Result<Vec<Artifact>, CliError> {
    let mut list = files
        .iter()
        .map(|f| {
            let (sha256, bytes) = sha256_file(f)?;
            let rel = f.strip_prefix(out).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok(Artifact { path, sha256, bytes })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    list.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(list)
}

pub fn write(out: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let dir = out.join("manifests");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join(format!("{}.json", manifest.command));
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
