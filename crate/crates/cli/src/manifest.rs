//! Run manifests.
//!
//! A manifest sits next to the primary artifact as `<out>.manifest.json`. It
//! holds the command, the fully resolved configuration, the seeds, every input
//! path as given on the command line with its SHA-256, and every artifact path
//! relative to the manifest's directory with its SHA-256. There are no
//! timestamps or absolute paths, so identical runs give identical bytes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub gen: u64,
    pub train_shuffle: u64,
    pub buffer_draws: u64,
    pub init: u64,
    pub hash: u64,
    pub check: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Config,
    pub seeds: Seeds,
    pub inputs: Vec<FileEntry>,
    pub artifacts: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file =
        fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Collects inputs and artifacts for one run, then writes the manifest.
pub struct ManifestBuilder {
    command: String,
    config: Config,
    inputs: Vec<FileEntry>,
    artifacts: Vec<(String, PathBuf)>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &Config) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Records an input under the path the user gave, hashed at `resolved`.
    pub fn input(&mut self, role: &str, given: &Path, resolved: &Path) -> Result<()> {
        self.inputs.push(FileEntry {
            role: role.to_string(),
            path: given.to_string_lossy().into_owned(),
            sha256: sha256_file(resolved)?,
        });
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, path: &Path) {
        self.artifacts.push((role.to_string(), path.to_path_buf()));
    }

    /// Writes `manifest_path` and returns it.
    pub fn write(self, manifest_path: &Path) -> Result<PathBuf> {
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for (role, path) in &self.artifacts {
            let rel = path.strip_prefix(base).unwrap_or(path);
            artifacts.push(FileEntry {
                role: role.clone(),
                path: rel.to_string_lossy().into_owned(),
                sha256: sha256_file(path)?,
            });
        }
        let c = &self.config;
        let manifest = Manifest {
            tool: "prmlab",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seeds: Seeds {
                gen: c.gen.seed,
                train_shuffle: c.train.seed,
                buffer_draws: c.loss.rng_seed,
                init: c.model.init_seed,
                hash: c.featurizer.hash_seed,
                check: c.check.seed,
            },
            config: self.config,
            inputs: self.inputs,
            artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(manifest_path, text.as_bytes())?;
        Ok(manifest_path.to_path_buf())
    }
}

/// Writes through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot rename onto {}", path.display()))?;
    Ok(())
}
