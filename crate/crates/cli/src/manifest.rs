//! Run manifests written beside each command's primary output.
//!
//! ```text
//! { "schema_version": 1, "tool": "rcx", "version": "0.1.0",
//!   "command": "train-target", "flags": { ... resolved flag values ... },
//!   "seeds": { "seed": 7 }, "inputs": { "data.json": "<sha256 hex>" },
//!   "outputs": ["model.json", "model.log.csv"], "extra": { ... } }
//! ```
//!
//! Manifests carry no timestamps or host paths beyond what the flags name,
//! so reruns with the same inputs and flags reproduce them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub flags: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, flags: &impl Serialize) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "rcx",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            flags: serde_json::to_value(flags).expect("flags serialize"),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> rcx_core::Result<&mut Self> {
        let bytes = fs::read(path).map_err(|e| rcx_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.insert(path.display().to_string(), hex);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// `<primary output>.manifest.json`
    pub fn path_for(primary: &Path) -> PathBuf {
        let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        primary.with_file_name(name)
    }

    pub fn write(&self, primary: &Path) -> rcx_core::Result<PathBuf> {
        let path = Self::path_for(primary);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| rcx_core::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}
