// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one invocation: argv, seed, effective configuration and the
/// digests of every file read or written.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: Value,
    /// SHA-256 of the compact JSON of `config`.
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

pub struct Recorder {
    pub subcommand: &'static str,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: Value,
}

impl Recorder {
    pub fn new(subcommand: &'static str, seed: u64) -> Recorder {
        Recorder { subcommand, seed, inputs: Vec::new(), outputs: Vec::new(), config: Value::Null }
    }

    /// Writes the manifest to `target` and returns its path.
    pub fn write(self, target: &Path) -> Result<PathBuf> {
        let config_hash = sha256_hex(serde_json::to_string(&self.config)?.as_bytes());
        let m = RunManifest {
            format_version: RUN_MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.to_string(),
            argv: std::env::args().skip(1).collect(),
            seed: self.seed,
            config: self.config,
            config_hash,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        crate::inputs::write(target, &text)?;
        Ok(target.to_path_buf())
    }
}

/// `<output>.manifest.json`, or `run.manifest.json` inside a directory output.
pub fn default_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("run.manifest.json")
    } else {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}
