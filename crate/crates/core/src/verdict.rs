//! Auditor verdicts on ranked apps, kept as an append-only log.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::read_jsonl;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    ConfirmedExploitable,
    Rejected,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub app_id: String,
    pub verdict: VerdictKind,
    pub auditor_id: String,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub evidence_review_ids: Vec<String>,
    pub timestamp: DateTime<Utc>,
}

impl AuditVerdict {
    pub fn validate(&self) -> Result<()> {
        if self.app_id.trim().is_empty() {
            return Err(Error::Validation("verdict needs an app id".into()));
        }
        if self.auditor_id.trim().is_empty() {
            return Err(Error::Validation("verdict needs an auditor id".into()));
        }
        if self.verdict == VerdictKind::ConfirmedExploitable && self.evidence_review_ids.is_empty() {
            return Err(Error::Validation(
                "a confirmed verdict needs at least one evidence review".into(),
            ));
        }
        Ok(())
    }
}

/// Every verdict ever recorded; the latest one per app is current.
#[derive(Debug, Default)]
pub struct VerdictLog {
    entries: Vec<AuditVerdict>,
    path: Option<PathBuf>,
}

impl VerdictLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self> {
        let entries = if path.exists() { read_jsonl(path)? } else { Vec::new() };
        Ok(Self {
            entries,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn append(&mut self, verdict: AuditVerdict) -> Result<()> {
        verdict.validate()?;
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_vec(&verdict)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
        }
        self.entries.push(verdict);
        Ok(())
    }

    pub fn entries(&self) -> &[AuditVerdict] {
        &self.entries
    }

    /// Latest verdict per app.
    pub fn current(&self) -> BTreeMap<&str, &AuditVerdict> {
        let mut out = BTreeMap::new();
        for v in &self.entries {
            out.insert(v.app_id.as_str(), v);
        }
        out
    }

    pub fn latest(&self, app_id: &str) -> Option<&AuditVerdict> {
        self.entries.iter().rev().find(|v| v.app_id == app_id)
    }

    /// Apps whose current verdict is a confirmation, sorted by id.
    pub fn confirmed(&self) -> Vec<String> {
        self.current()
            .into_iter()
            .filter(|(_, v)| v.verdict == VerdictKind::ConfirmedExploitable)
            .map(|(a, _)| a.to_string())
            .collect()
    }
}
