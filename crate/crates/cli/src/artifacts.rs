//! Output layout, manifests and hashed file writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use factprobe::corpus::{ClaimRecord, SplitRatios};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Paths under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn prepared(&self, dataset: &str) -> PathBuf {
        self.root.join("prepared").join(dataset)
    }

    pub fn checkpoints(&self, dataset: &str) -> PathBuf {
        self.root.join("checkpoints").join(dataset)
    }

    pub fn checkpoint(&self, dataset: &str, probe: &str) -> PathBuf {
        self.checkpoints(dataset).join(format!("{probe}.json"))
    }

    pub fn grid_csv(&self, dataset: &str, probe: &str) -> PathBuf {
        self.root.join("grids").join(dataset).join(format!("{probe}.csv"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn synth(&self) -> PathBuf {
        self.root.join("synth")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes`, creating parent directories, and returns their SHA-256.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io(path, e))?;
    Ok(sha256_hex(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(factprobe::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Missing(format!("{what} ({})", path.display())))
        }
        Err(e) => return Err(io(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Stale(format!("{what} is unreadable ({}): {e}", path.display())))
}

/// Serializes records the same way `write_corpus` does.
pub fn corpus_bytes(records: &[ClaimRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.extend(serde_json::to_string(r).expect("record serializes").bytes());
        out.push(b'\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: String,
    pub file: String,
    pub records: usize,
    /// Hash of the record contents, as stored in probe checkpoints.
    pub content_hash: String,
    pub sha256: String,
    pub counts: BTreeMap<String, usize>,
}

/// Written by `prepare` next to the split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedManifest {
    pub version: u32,
    pub dataset: String,
    pub source: String,
    pub scheme: String,
    pub scheme_fingerprint: String,
    pub scheme_sha256: String,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub input_records: usize,
    pub excluded_records: usize,
    pub total: usize,
    pub splits: Vec<SplitEntry>,
}

impl PreparedManifest {
    pub fn split(&self, name: &str) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.split == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub probe: String,
    pub family: String,
    pub regime: String,
    pub file: String,
    pub sha256: String,
    pub hyper: String,
    pub val_score: f64,
}

/// Written by `train` next to the checkpoints of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub dataset: String,
    pub train_hash: String,
    pub checkpoints: Vec<CheckpointEntry>,
}
