//! Content-addressed fitness cache.
//!
//! Two patches that produce byte-identical variants are the same measurement,
//! so results are keyed by a digest over everything the subprocesses can see:
//! the rendered source files, the rendered parameter configuration, the
//! configuration validity flag, and the instance set. The cache persists as an
//! append-only JSONL file in the work directory and is reloaded on startup.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fitness::FitnessReport;
use crate::model::VariantArtifacts;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable identifier for an instance list; part of the variant digest so the
/// same variant measured on train, validation, and test sets is cached
/// separately.
pub fn instance_set_id(instances: &[String]) -> String {
    let mut h = Sha256::new();
    for inst in instances {
        h.update(inst.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

/// Digest of a rendered variant: file contents, configuration text, validity,
/// and the instance set it will be measured on.
pub fn variant_digest(
    artifacts: &VariantArtifacts,
    config_text: &str,
    config_valid: bool,
    instance_set: &str,
) -> String {
    let mut h = Sha256::new();
    for (id, content) in &artifacts.files {
        h.update(b"file:");
        h.update(id.as_bytes());
        h.update(b":");
        h.update(content.len().to_string().as_bytes());
        h.update(b":");
        h.update(content.as_bytes());
    }
    h.update(b"config:");
    h.update(config_text.as_bytes());
    h.update(if config_valid { b"valid:1" } else { b"valid:0" });
    h.update(b"instances:");
    h.update(instance_set.as_bytes());
    hex(&h.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    digest: String,
    report: FitnessReport,
}

/// In-memory map backed by an append-only JSONL journal.
pub struct EvalCache {
    map: Mutex<HashMap<String, FitnessReport>>,
    journal: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EvalCache {
    /// Cache with no backing file (used by short-lived evaluations and tests).
    pub fn in_memory() -> Self {
        EvalCache {
            map: Mutex::new(HashMap::new()),
            journal: None,
            path: None,
        }
    }

    /// Opens (or creates) the journal at `path` and loads every record in it.
    /// Unparseable lines — e.g. a torn final write from a killed run — are
    /// skipped rather than treated as corruption of the whole cache.
    pub fn open(path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    map.insert(entry.digest, entry.report);
                }
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let journal = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EvalCache {
            map: Mutex::new(map),
            journal: Some(Mutex::new(journal)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<FitnessReport> {
        self.map.lock().unwrap().get(digest).cloned()
    }

    pub fn insert(&self, digest: &str, report: &FitnessReport) -> Result<()> {
        self.map
            .lock()
            .unwrap()
            .insert(digest.to_string(), report.clone());
        if let Some(journal) = &self.journal {
            let line = serde_json::to_string(&CacheLine {
                digest: digest.to_string(),
                report: report.clone(),
            })?;
            let mut file = journal.lock().unwrap();
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}
