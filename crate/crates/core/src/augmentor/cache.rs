//! Append-only JSONL store of LLM candidates.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AugmentError, CandidateSource, Result, Strategy};

/// Trims and collapses internal whitespace runs to one space. Case is kept.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hex SHA-256 over the normalized text, strategy, model id and `k`.
pub fn record_key(source_text: &str, strategy: Strategy, model_id: &str, k: usize) -> String {
    let mut h = Sha256::new();
    for part in [
        normalize_text(source_text).as_bytes(),
        strategy.as_str().as_bytes(),
        model_id.as_bytes(),
        k.to_string().as_bytes(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub key: String,
    pub source_text: String,
    pub strategy: Strategy,
    pub model_id: String,
    pub candidates: Vec<String>,
    pub created_at: String,
}

impl AugmentationRecord {
    pub fn new(
        source_text: &str,
        strategy: Strategy,
        model_id: &str,
        candidates: Vec<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        Self {
            key: record_key(source_text, strategy, model_id, candidates.len()),
            source_text: source_text.to_owned(),
            strategy,
            model_id: model_id.to_owned(),
            candidates,
            created_at: created_at.to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn recompute_key(&self) -> String {
        record_key(&self.source_text, self.strategy, &self.model_id, self.k())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.candidates.is_empty() {
            return Err("record has no candidates".into());
        }
        if self.candidates.iter().any(|c| c.trim().is_empty()) {
            return Err("record has an empty candidate".into());
        }
        if self.recompute_key() != self.key {
            return Err(format!("key {} does not match record fields", self.key));
        }
        Ok(())
    }
}

/// In-memory index over an append-only JSONL file.
///
/// A final line without a newline (an interrupted append) is ignored on load
/// and cut off before the next append, so readers always see a complete
/// prefix of records.
#[derive(Debug)]
pub struct AugmentCache {
    path: PathBuf,
    records: HashMap<String, AugmentationRecord>,
    valid_len: u64,
    file_len: u64,
}

impl AugmentCache {
    /// Opens (or lazily creates) the cache at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut cache = Self {
            path,
            records: HashMap::new(),
            valid_len: 0,
            file_len: 0,
        };
        let bytes = match fs::read(&cache.path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e.into()),
        };
        cache.file_len = bytes.len() as u64;
        let mut offset = 0usize;
        for (i, chunk) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
            if !chunk.ends_with(b"\n") {
                break;
            }
            let line_no = i + 1;
            let line = std::str::from_utf8(chunk).map_err(|e| AugmentError::CacheCorrupt {
                line: line_no,
                reason: e.to_string(),
            })?;
            offset += chunk.len();
            if line.trim().is_empty() {
                continue;
            }
            let rec: AugmentationRecord =
                serde_json::from_str(line).map_err(|e| AugmentError::CacheCorrupt {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            rec.validate()
                .map_err(|reason| AugmentError::CacheCorrupt { line: line_no, reason })?;
            cache.records.insert(rec.key.clone(), rec);
        }
        cache.valid_len = offset as u64;
        Ok(cache)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&AugmentationRecord> {
        self.records.get(key)
    }

    pub fn lookup(
        &self,
        source_text: &str,
        strategy: Strategy,
        model_id: &str,
        k: usize,
    ) -> Option<&AugmentationRecord> {
        self.get(&record_key(source_text, strategy, model_id, k))
    }

    pub fn records(&self) -> impl Iterator<Item = &AugmentationRecord> {
        self.records.values()
    }

    /// Appends one record as a single write of one complete line.
    pub fn append(&mut self, record: AugmentationRecord) -> Result<()> {
        record
            .validate()
            .map_err(|reason| AugmentError::CacheCorrupt { line: 0, reason })?;
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        if self.file_len > self.valid_len {
            let f = OpenOptions::new().write(true).open(&self.path)?;
            f.set_len(self.valid_len)?;
            self.file_len = self.valid_len;
        }
        let mut line = serde_json::to_string(&record).map_err(|e| AugmentError::CacheCorrupt {
            line: 0,
            reason: e.to_string(),
        })?;
        line.push('\n');
        let mut f: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        self.valid_len += line.len() as u64;
        self.file_len = self.valid_len;
        self.records.insert(record.key.clone(), record);
        Ok(())
    }
}

/// Returns the cached record for `(source_text, strategy, source model, k)`
/// or fetches, appends and returns a new one.
pub fn get_or_fetch(
    source_text: &str,
    strategy: Strategy,
    k: usize,
    cache: &mut AugmentCache,
    source: &dyn CandidateSource,
) -> Result<AugmentationRecord> {
    if let Some(rec) = cache.lookup(source_text, strategy, source.model_id(), k) {
        return Ok(rec.clone());
    }
    let candidates = source.fetch(source_text, strategy, k)?;
    let rec = AugmentationRecord::new(source_text, strategy, source.model_id(), candidates, Utc::now());
    cache.append(rec.clone())?;
    Ok(rec)
}
