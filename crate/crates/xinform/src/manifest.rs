//! Run manifests: every CLI invocation that writes artifacts also records
//! its resolved configuration, seed and output digests, so any output can be
//! reproduced byte-for-byte from its manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn start(command: impl Into<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config,
            seed,
            version: ARTIFACT_VERSION.to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    /// Record a finished output file with its digest.
    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read output {path:?}: {e}")))?;
        self.outputs.push(OutputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Write the manifest next to `primary_output` as
    /// `<primary_output>.manifest.json`.
    pub fn finish(mut self, primary_output: &Path) -> Result<PathBuf> {
        self.finished_unix_ms = now_ms();
        let mut path = primary_output.as_os_str().to_owned();
        path.push(".manifest.json");
        let path = PathBuf::from(path);
        let body = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
        fs::write(&path, body)
            .map_err(|e| Error::InvalidInput(format!("cannot write manifest {path:?}: {e}")))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result.json");
        std::fs::write(&out, b"{}").unwrap();
        let mut m = RunManifest::start("test", serde_json::json!({"n": 4}), Some(7));
        m.record_output(&out).unwrap();
        let path = m.finish(&out).unwrap();
        let loaded: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded.outputs.len(), 1);
        assert_eq!(loaded.outputs[0].sha256, sha256_hex(b"{}"));
        assert_eq!(loaded.seed, Some(7));
    }
}
