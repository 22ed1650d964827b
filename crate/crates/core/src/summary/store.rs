use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::prompt::RedactionAuditor;
use super::{BackendTag, TransactionSummary};
use crate::error::{Error, Result};
use crate::ingest::NodeId;

/// One line of the evidence store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub cache_key: String,
    pub account: NodeId,
    pub text: String,
    pub sentences: Vec<String>,
    pub backend_tag: BackendTag,
    pub created_at: u64,
}

impl EvidenceRecord {
    fn summary(&self) -> TransactionSummary {
        TransactionSummary {
            account: self.account,
            text: self.text.clone(),
            sentences: self.sentences.clone(),
            backend_tag: self.backend_tag,
            cache_key: self.cache_key.clone(),
        }
    }
}

/// Write-once cache of summaries keyed by content digest, optionally backed by
/// a JSON-lines file. The first write for a key wins; later writes for the same
/// key return the stored summary.
#[derive(Debug)]
pub struct EvidenceStore {
    path: Option<PathBuf>,
    auditor: RedactionAuditor,
    records: Mutex<HashMap<String, EvidenceRecord>>,
}

impl EvidenceStore {
    pub fn in_memory() -> Self {
        EvidenceStore { path: None, auditor: RedactionAuditor::default(), records: Mutex::new(HashMap::new()) }
    }

    /// Opens (or creates on first write) a JSON-lines store at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let mut records = HashMap::new();
        if path.exists() {
            let text = crate::io::read_to_string(path)?;
            for r in crate::io::from_jsonl::<EvidenceRecord>(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })? {
                records.entry(r.cache_key.clone()).or_insert(r);
            }
        }
        Ok(EvidenceStore {
            path: Some(path.to_path_buf()),
            auditor: RedactionAuditor::default(),
            records: Mutex::new(records),
        })
    }

    pub fn with_auditor(mut self, auditor: RedactionAuditor) -> Self {
        self.auditor = auditor;
        self
    }

    pub fn get(&self, cache_key: &str) -> Option<TransactionSummary> {
        self.records.lock().expect("store lock").get(cache_key).map(EvidenceRecord::summary)
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `summary` unless its key is already present, and returns whatever
    /// is stored under the key afterwards.
    pub fn insert(&self, summary: &TransactionSummary) -> Result<TransactionSummary> {
        self.auditor.check("summary", &summary.text)?;
        let mut records = self.records.lock().expect("store lock");
        if let Some(existing) = records.get(&summary.cache_key) {
            return Ok(existing.summary());
        }
        let record = EvidenceRecord {
            cache_key: summary.cache_key.clone(),
            account: summary.account,
            text: summary.text.clone(),
            sentences: summary.sentences.clone(),
            backend_tag: summary.backend_tag,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        records.insert(record.cache_key.clone(), record);
        Ok(summary.clone())
    }

    /// All records, ordered by cache key.
    pub fn records(&self) -> Vec<EvidenceRecord> {
        let mut v: Vec<EvidenceRecord> = self.records.lock().expect("store lock").values().cloned().collect();
        v.sort_by(|a, b| a.cache_key.cmp(&b.cache_key));
        v
    }

    /// Summary stored for `account`, if any.
    pub fn for_account(&self, account: NodeId) -> Option<TransactionSummary> {
        self.records().into_iter().find(|r| r.account == account).map(|r| r.summary())
    }

    /// Checks every stored text against the identifier patterns.
    pub fn audit(&self, auditor: &RedactionAuditor) -> Result<()> {
        for r in self.records() {
            auditor.check(&format!("evidence record {}", r.cache_key), &r.text)?;
        }
        Ok(())
    }
}
