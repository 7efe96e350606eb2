//! Run manifests and the digests used to compare outputs across runs.

use std::path::{Path, PathBuf};

use edgefall::config::RunConfig;
use edgefall::util::{fingerprint_bytes, write_atomic};
use edgefall::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::Command;

pub const MANIFEST_FILE: &str = "manifest.json";

/// An output file produced by a command, before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub bytes: Vec<u8>,
    /// CSV columns or top-level JSON keys that hold wall-clock measurements
    /// and are left out of the reproducibility digest.
    pub timing_fields: Vec<String>,
}

impl Artifact {
    pub fn new(file: &str, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            file: file.to_string(),
            bytes: bytes.into(),
            timing_fields: Vec::new(),
        }
    }

    pub fn with_timing_fields(mut self, fields: &[&str]) -> Self {
        self.timing_fields = fields.iter().map(|f| (*f).to_string()).collect();
        self
    }

    pub fn digest(&self) -> Result<String> {
        digest(&self.file, &self.bytes, &self.timing_fields)
    }
}

/// SHA-256 over the file contents with the timing fields removed.
pub fn digest(file: &str, bytes: &[u8], timing_fields: &[String]) -> Result<String> {
    if timing_fields.is_empty() {
        return Ok(fingerprint_bytes(bytes));
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Schema { path: file.into(), msg: e.to_string() })?;
    let stripped = if file.ends_with(".csv") {
        strip_csv_columns(text, timing_fields)
    } else {
        let mut value: Value = serde_json::from_str(text)?;
        if let Value::Object(map) = &mut value {
            for f in timing_fields {
                map.remove(f);
            }
        }
        serde_json::to_string(&value)?
    };
    Ok(fingerprint_bytes(stripped.as_bytes()))
}

fn strip_csv_columns(text: &str, drop: &[String]) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let keep: Vec<bool> = header.split(',').map(|h| !drop.iter().any(|d| d == h)).collect();
    let filter = |line: &str| -> String {
        line.split(',')
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v)
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = filter(header);
    out.push('\n');
    for line in lines {
        out.push_str(&filter(line));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    /// The command with every path made absolute.
    pub invocation: Command,
    /// Defaults, configuration file and flags merged.
    pub resolved_config: RunConfig,
    pub seeds: Seeds,
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub outputs: Vec<OutputRecord>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.into(),
            msg: format!("not a run manifest: {e}"),
        })
    }
}

/// Writes every artifact into `out_dir` and returns their records. Each file
/// is written atomically.
pub fn write_artifacts(out_dir: &Path, artifacts: &[Artifact]) -> Result<Vec<OutputRecord>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = artifacts
        .iter()
        .map(|a| {
            Ok(OutputRecord {
                file: a.file.clone(),
                sha256: a.digest()?,
                timing_fields: a.timing_fields.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for a in artifacts {
        write_atomic(&out_dir.join(&a.file), &a.bytes)?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_timing_columns_do_not_affect_digest() {
        let a = Artifact::new("log.csv", "epoch,loss,seconds\n1,0.5,0.01\n").with_timing_fields(&["seconds"]);
        let b = Artifact::new("log.csv", "epoch,loss,seconds\n1,0.5,0.97\n").with_timing_fields(&["seconds"]);
        let c = Artifact::new("log.csv", "epoch,loss,seconds\n1,0.6,0.01\n").with_timing_fields(&["seconds"]);
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn json_timing_keys_do_not_affect_digest() {
        let a = Artifact::new("r.json", r#"{"macs":10,"median_ms":1.0}"#).with_timing_fields(&["median_ms"]);
        let b = Artifact::new("r.json", r#"{"macs":10,"median_ms":2.0}"#).with_timing_fields(&["median_ms"]);
        let c = Artifact::new("r.json", r#"{"macs":11,"median_ms":1.0}"#).with_timing_fields(&["median_ms"]);
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn plain_files_hash_every_byte() {
        let a = Artifact::new("m.json", "{}\n");
        let b = Artifact::new("m.json", "{} \n");
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
