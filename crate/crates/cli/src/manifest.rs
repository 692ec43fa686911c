//! Run manifests: everything needed to repeat a command exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agrisense::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    /// Effective configuration after flags were applied.
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub versions: BTreeMap<String, String>,
}

impl Manifest {
    pub fn versions() -> BTreeMap<String, String> {
        let mut v = BTreeMap::new();
        v.insert("agrisense".into(), env!("CARGO_PKG_VERSION").into());
        v.insert(
            "model_format".into(),
            agrisense::learn::hierarchical::MODEL_FORMAT_VERSION.to_string(),
        );
        v
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
