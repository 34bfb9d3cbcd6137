//! Content-addressed result cache: JSON files keyed by a stable hash of the
//! inputs that determine the result.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// 128-bit FNV-1a over the canonical input description, hex-encoded.
pub fn content_hash(parts: &[&str]) -> String {
    fn fnv1a(seed: u64, parts: &[&str]) -> u64 {
        let mut h = seed;
        for part in parts {
            for &b in part.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
            // Separator so ("ab","c") differs from ("a","bc").
            h ^= 0x1f;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
    let a = fnv1a(0xcbf2_9ce4_8422_2325, parts);
    let b = fnv1a(0x6c62_272e_07bb_0142, parts);
    format!("{a:016x}{b:016x}")
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Cache {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.json"))
    }

    /// Loads a cached value; decode failures are treated as misses so a
    /// stale or corrupted file never poisons a run.
    pub fn load<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        let raw = fs::read_to_string(self.path(kind, key)).ok()?;
        serde_json::from_str(&raw).ok()
    }

    pub fn store<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(kind, key);
        let raw = serde_json::to_string(value)
            .map_err(|e| Error::Cache(format!("encode failure: {e}")))?;
        fs::write(&path, raw)?;
        Ok(path)
    }
}
