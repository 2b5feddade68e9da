//! Per-run manifests: the effective config snapshot, seed, crate version and
//! input checksums. Deliberately free of timestamps or host details so a
//! rerun with the same inputs produces byte-identical output trees.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{atomic_write, ConfigSnapshot, DataError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: ConfigSnapshot,
    /// SHA-256 of each declared input file.
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: ConfigSnapshot) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: BTreeMap::new(),
        }
    }

    /// Records the checksum of an input file (ignored if absent, so optional
    /// inputs do not fail the run here; the command itself validates them).
    pub fn add_input(&mut self, label: &str, path: &Path) {
        if let Ok(bytes) = std::fs::read(path) {
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            self.inputs.insert(label.into(), format!("{:x}", hasher.finalize()));
        }
    }

    /// Writes `<out_dir>/manifest.<command>.json`.
    pub fn write(&self, out_dir: &Path) -> Result<(), DataError> {
        let path = out_dir.join(format!("manifest.{}.json", self.command));
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        atomic_write(&path, &json)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
