use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub bellfrac: String,
}

/// Record of one invocation: enough to rerun it and to check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub samples: Option<u64>,
    pub inequality_source: Option<String>,
    pub inequality_set_hash: Option<String>,
    pub versions: Versions,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub results: serde_json::Value,
    pub timestamp_unix: u64,
}

/// Tracks the files a command reads and writes.
pub struct Run {
    pub manifest: RunManifest,
    manifest_path: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &str, manifest_path: Option<PathBuf>) -> Self {
        let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args: std::env::args().skip(1).collect(),
                seed: None,
                workers: None,
                samples: None,
                inequality_source: None,
                inequality_set_hash: None,
                versions: Versions { bellfrac: env!("CARGO_PKG_VERSION").to_string() },
                inputs: Vec::new(),
                outputs: Vec::new(),
                results: serde_json::Value::Null,
                timestamp_unix,
            },
            manifest_path,
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        if !path.exists() {
            return Err(bellfrac_core::Error::MissingData(path.to_path_buf()).into());
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) });
        Ok(text)
    }

    /// Registers a file written by a library call.
    pub fn wrote(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading back {}", path.display()))?;
        self.manifest.outputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Writes `text` to `out`, or to stdout when no path is given.
    pub fn emit(&mut self, out: Option<&Path>, text: &str) -> Result<()> {
        match out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
                self.wrote(path)
            }
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }

    /// Writes the manifest to the explicit path, else beside the first
    /// output file. Runs that only print to stdout need an explicit path.
    pub fn finish(self) -> Result<()> {
        let path = match (self.manifest_path, self.manifest.outputs.first()) {
            (Some(p), _) => p,
            (None, Some(first)) => PathBuf::from(format!("{}.manifest.json", first.path)),
            (None, None) => return Ok(()),
        };
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
