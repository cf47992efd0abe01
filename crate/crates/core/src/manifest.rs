//! Run manifests: every output directory records what produced it.
//!
//! The run id is a digest of the command, the resolved config, and the
//! input-file digests, so identical runs share an id. Timestamps make the
//! manifest the one output file that is not byte-stable across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_snapshot: serde_json::Value,
    /// Input path -> hex SHA-256 of its bytes.
    pub input_digests: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_snapshot: serde_json::Value,
        inputs: &[PathBuf],
    ) -> io::Result<Self> {
        let mut input_digests = BTreeMap::new();
        for path in inputs {
            input_digests.insert(path.display().to_string(), sha256_file(path)?);
        }

        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(config_snapshot.to_string().as_bytes());
        for (path, digest) in &input_digests {
            hasher.update(path.as_bytes());
            hasher.update(digest.as_bytes());
        }
        let run_id = hex_prefix(&hasher.finalize(), 12);

        Ok(RunManifest {
            run_id,
            command: command.to_string(),
            config_snapshot,
            input_digests,
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }

    /// Writes `manifest.json` into the output directory.
    pub fn write_to(&self, out_dir: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(out_dir.join("manifest.json"), json)
    }

    /// Re-verifies the recorded input digests against the filesystem,
    /// returning the paths that changed.
    pub fn changed_inputs(&self) -> io::Result<Vec<String>> {
        let mut changed = Vec::new();
        for (path, digest) in &self.input_digests {
            if &sha256_file(Path::new(path))? != digest {
                changed.push(path.clone());
            }
        }
        Ok(changed)
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_prefix(&hasher.finalize(), 64))
}

fn hex_prefix(digest: &[u8], chars: usize) -> String {
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out.truncate(chars);
    out
}
