//! Run manifests: every subcommand records its resolved configuration and
//! input hashes before it writes any output, so a run can be reproduced and
//! hash-compared later.

use mvsense::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    /// Fully resolved settings after flag > config file > preset merging.
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, jobs: usize, config: serde_json::Value) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            jobs,
            config,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        self.input_hashes.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Atomic write: temp file in the target directory, then rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| mvsense::Error::InvalidInput(format!("manifest serialization: {e}")))?;
        let tmp = tmp_sibling(path);
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let data = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&data)))
}
