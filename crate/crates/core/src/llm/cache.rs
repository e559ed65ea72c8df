use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{LlmError, TokenCounts};

pub const CACHE_FILE: &str = "responses.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub backend_id: String,
    pub model_name: String,
    pub text: String,
    pub token_counts: TokenCounts,
}

/// Append-only key→response store. Reads share a lock; appends are
/// serialized through the file handle.
pub struct ResponseCache {
    entries: RwLock<HashMap<String, CacheRecord>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { entries: RwLock::new(HashMap::new()), file: None, path: None }
    }

    /// Opens (or creates) `dir/responses.jsonl`. A torn final line from an
    /// interrupted writer is ignored; later records win on duplicate keys.
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        let err = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(err)?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let lines: Vec<String> =
                BufReader::new(File::open(&path).map_err(err)?).lines().collect::<Result<_, _>>().map_err(err)?;
            let last = lines.len().saturating_sub(1);
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(rec) => {
                        entries.insert(rec.key.clone(), rec);
                    }
                    Err(e) if i == last => {
                        tracing::warn!("ignoring torn cache record at line {}: {e}", i + 1);
                    }
                    Err(e) => {
                        return Err(LlmError::Cache(format!(
                            "{} line {}: {e}",
                            path.display(),
                            i + 1
                        )))
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
        Ok(Self { entries: RwLock::new(entries), file: Some(Mutex::new(file)), path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: CacheRecord) -> Result<(), LlmError> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&record).map_err(|e| LlmError::Cache(e.to_string()))?;
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| LlmError::Cache(e.to_string()))?;
        }
        self.entries.write().expect("cache lock poisoned").insert(record.key.clone(), record);
        Ok(())
    }
}
