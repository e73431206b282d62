use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SynthError;

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String, SynthError> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| SynthError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| SynthError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// What one finished stage produced. `fingerprint` covers everything the
/// stage read (parameters and input checksums); output paths are relative
/// to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub outputs: BTreeMap<String, String>,
}

impl StageRecord {
    pub fn capture(fingerprint: impl Into<String>, dir: &Path, outputs: &[&str]) -> Result<Self, SynthError> {
        let outputs = outputs
            .iter()
            .map(|name| Ok((name.to_string(), file_sha256(dir.join(name))?)))
            .collect::<Result<_, SynthError>>()?;
        Ok(Self {
            fingerprint: fingerprint.into(),
            outputs,
        })
    }

    /// True when the stage ran with the same fingerprint and every output is
    /// still on disk unchanged.
    pub fn is_current(&self, fingerprint: &str, dir: &Path) -> bool {
        self.fingerprint == fingerprint
            && self
                .outputs
                .iter()
                .all(|(name, sum)| file_sha256(dir.join(name)).is_ok_and(|s| s == *sum))
    }
}

/// Record of a pipeline run, kept free of timestamps so identical runs
/// write identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    pub counters: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    /// `Ok(None)` when no manifest exists yet.
    pub fn load(path: impl AsRef<Path>) -> Result<Option<Self>, SynthError> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::io(path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| SynthError::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| SynthError::io(path, e))
    }
}
