//! Per-command run manifest: what ran, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "riskfsc-manifest";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.display().to_string(), sha256: sha256_hex(bytes) }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Wall time is the only field that varies between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub versions: BTreeMap<&'static str, String>,
    pub wall_time_seconds: f64,
}

/// Collects inputs read and outputs written by one command.
#[derive(Debug, Default)]
pub struct Recorder {
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Recorder {
    /// Reads an input file; a missing or unreadable file is an input error.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(FileDigest::of_bytes(path, &bytes));
        String::from_utf8(bytes).map_err(|_| Error::InvalidInput(format!("{} is not UTF-8 text", path.display())))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        self.outputs.push(FileDigest::of_bytes(path, bytes));
        Ok(())
    }

    pub fn outputs(&self) -> &[FileDigest] {
        &self.outputs
    }

    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        wall_time_seconds: f64,
    ) -> RunManifest {
        let mut versions = BTreeMap::new();
        versions.insert("riskfsc", env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest", MANIFEST_FORMAT_VERSION.to_string());
        RunManifest {
            format: MANIFEST_FORMAT,
            version: MANIFEST_FORMAT_VERSION,
            command: command.to_string(),
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            versions,
            wall_time_seconds,
        }
    }
}

/// `out` with its extension replaced by `suffix`: `runs/fsc.json` → `runs/fsc.<suffix>`.
pub fn companion(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// `prefix` with `.<suffix>` appended; dots already in the prefix are kept.
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
