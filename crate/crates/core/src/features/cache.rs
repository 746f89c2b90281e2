//! Persistent embedding cache keyed by provider, review, and preprocessing config.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::read_jsonl;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub provider_id: String,
    pub review_id: String,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    #[serde(flatten)]
    key: CacheKey,
    values: Vec<f64>,
}

/// Readers share a lock; inserts and file appends are serialized.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Vec<f64>>>,
    file: Option<Mutex<PathBuf>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads an existing JSONL cache, or starts an empty one that will be
    /// written to `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in read_jsonl::<CacheLine>(path)? {
                entries.insert(line.key, line.values);
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(path.to_path_buf())),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert_many(&self, items: Vec<(CacheKey, Vec<f64>)>) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let path = file.lock().expect("cache file lock");
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&*path)
                .map_err(|e| Error::io(&*path, e))?;
            let mut w = BufWriter::new(f);
            for (key, values) in &items {
                serde_json::to_writer(
                    &mut w,
                    &CacheLine {
                        key: key.clone(),
                        values: values.clone(),
                    },
                )?;
                w.write_all(b"\n").map_err(|e| Error::io(&*path, e))?;
            }
            w.flush().map_err(|e| Error::io(&*path, e))?;
        }
        let mut entries = self.entries.write().expect("cache lock");
        entries.extend(items);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(id: &str) -> CacheKey {
        CacheKey {
            provider_id: "p".into(),
            review_id: id.into(),
            config_hash: "h".into(),
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = EmbeddingCache::open(&path).unwrap();
        cache.insert_many(vec![(key("a"), vec![0.5, -0.25])]).unwrap();
        let again = EmbeddingCache::open(&path).unwrap();
        assert_eq!(again.get(&key("a")), Some(vec![0.5, -0.25]));
        assert_eq!(again.get(&key("b")), None);
    }
}
