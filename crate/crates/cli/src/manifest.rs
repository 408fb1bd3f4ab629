use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    /// Data rows, header excluded; zero for JSON files.
    pub rows: usize,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 of the model JSON bytes and the resolved flags.
    pub config_digest: String,
    pub outputs: Vec<OutputEntry>,
    /// Seconds.
    pub wall_time: f64,
}

pub struct Recorder {
    subcommand: &'static str,
    digest: String,
    outputs: Vec<OutputEntry>,
    start: Instant,
}

/// Hash of the model bytes and the flags that affect results, in key order.
pub fn config_digest(subcommand: &str, model: &[u8], flags: &BTreeMap<&str, String>) -> String {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0]);
    h.update((model.len() as u64).to_le_bytes());
    h.update(model);
    for (k, v) in flags {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl Recorder {
    pub fn new(subcommand: &'static str, model: &[u8], flags: &BTreeMap<&str, String>) -> Self {
        Self {
            subcommand,
            digest: config_digest(subcommand, model, flags),
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn output(&mut self, path: &Path, rows: usize) {
        self.outputs.push(OutputEntry {
            path: path.to_path_buf(),
            rows,
        });
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            subcommand: self.subcommand.to_string(),
            config_digest: self.digest,
            outputs: self.outputs,
            wall_time: self.start.elapsed().as_secs_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_every_input() {
        let flags = |seed: &str| BTreeMap::from([("seed", seed.to_string()), ("steps", "10".to_string())]);
        let base = config_digest("simulate", b"{}", &flags("1"));
        assert_eq!(base, config_digest("simulate", b"{}", &flags("1")));
        assert_eq!(base.len(), 64);
        assert_ne!(base, config_digest("simulate", b"{}", &flags("2")));
        assert_ne!(base, config_digest("simulate", b"{ }", &flags("1")));
        assert_ne!(base, config_digest("cc", b"{}", &flags("1")));
    }

    #[test]
    fn digest_frames_subcommand_and_model_length() {
        // Empty model and no flags hash to the framing bytes alone.
        let d = config_digest("validate", b"", &BTreeMap::new());
        let mut h = Sha256::new();
        h.update(b"validate\0");
        h.update(0u64.to_le_bytes());
        assert_eq!(d, hex::encode(h.finalize()));
    }
}
