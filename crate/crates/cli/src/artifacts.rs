//! Content-addressed artifact directories.
//!
//! Every stage writes into `<out>/<stage>-<hash12>`, where the hash covers the
//! stage's configuration and the hashes of the artifacts it consumed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical (key-sorted, compact) JSON encoding.
pub fn hash_value(v: &Value) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("JSON values always serialize"))
}

pub fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("config types serialize to JSON")
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub stage: String,
    pub hash: String,
    pub dir: PathBuf,
    key: Value,
}

impl Artifact {
    pub fn locate(out: &Path, stage: &str, key: Value) -> Self {
        let hash = hash_value(&json!({ "stage": stage, "key": key }));
        let dir = out.join(format!("{stage}-{}", &hash[..12]));
        Self { stage: stage.to_string(), hash, dir, key }
    }

    pub fn exists(&self) -> bool {
        self.dir.join(MANIFEST).is_file()
    }

    /// Fails unless a previous run completed this artifact.
    pub fn require(&self, hint: &str) -> Result<&Self> {
        if self.exists() {
            Ok(self)
        } else {
            Err(CliError::Data(format!("missing {} artifact {}; run `pairlab {hint}` first", self.stage, self.dir.display())))
        }
    }

    /// Clears any partial output and starts a fresh directory.
    pub fn begin(&self) -> Result<()> {
        if self.dir.exists() {
            fs::remove_dir_all(&self.dir)?;
        }
        fs::create_dir_all(&self.dir)?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.path(name), bytes).map_err(|e| CliError::Data(format!("{}: {e}", self.path(name).display())))
    }

    pub fn write_json(&self, name: &str, v: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
        self.write(name, text + "\n")
    }

    pub fn read(&self, name: &str) -> Result<String> {
        fs::read_to_string(self.path(name)).map_err(|e| CliError::Data(format!("{}: {e}", self.path(name).display())))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        serde_json::from_str(&self.read(name)?).map_err(|e| CliError::Data(format!("{}: {e}", self.path(name).display())))
    }

    /// Written last, so its presence marks a complete artifact.
    pub fn finish(&self, files: &[&str]) -> Result<()> {
        let mut listed = Vec::new();
        for f in files {
            let bytes = fs::read(self.path(f))?;
            listed.push(json!({ "name": f, "sha256": sha256_hex(&bytes) }));
        }
        self.write_json(MANIFEST, &json!({ "stage": self.stage, "hash": self.hash, "key": self.key, "files": listed }))
    }
}
