//! Stand-in for outgoing email: invites are appended to a JSON-lines file.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::TtpError;
use crate::ids::FolderId;

pub const INVITE_SUBJECT: &str = "You have been invited to a shared cryptosearch folder";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Invite {
    pub to: String,
    pub subject: String,
    pub folder_id: Option<FolderId>,
    pub timestamp: DateTime<Utc>,
}

struct Inner {
    entries: Vec<Invite>,
    seen: HashSet<(Option<FolderId>, String)>,
}

pub struct Outbox {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl Outbox {
    pub fn in_memory() -> Self {
        Outbox {
            path: None,
            inner: Mutex::new(Inner {
                entries: Vec::new(),
                seen: HashSet::new(),
            }),
        }
    }

    /// Opens (or creates on first write) the file at `path`, loading any
    /// invites already sent so deduplication survives restarts.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TtpError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        match fs::read_to_string(&path) {
            Ok(text) => {
                for (n, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let invite: Invite = serde_json::from_str(line).map_err(|e| {
                        TtpError::Internal(format!("outbox line {}: {e}", n + 1))
                    })?;
                    entries.push(invite);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(TtpError::Internal(format!("outbox: {e}"))),
        }
        let seen = entries
            .iter()
            .map(|i| (i.folder_id.clone(), i.to.clone()))
            .collect();
        Ok(Outbox {
            path: Some(path),
            inner: Mutex::new(Inner { entries, seen }),
        })
    }

    /// Queues an invite unless one already went to `to` for `folder`.
    /// Returns whether a new entry was written.
    pub fn invite(&self, to: &str, folder: Option<&FolderId>) -> Result<bool, TtpError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let key = (folder.cloned(), to.to_owned());
        if inner.seen.contains(&key) {
            return Ok(false);
        }
        let invite = Invite {
            to: to.to_owned(),
            subject: INVITE_SUBJECT.to_owned(),
            folder_id: folder.cloned(),
            timestamp: Utc::now(),
        };
        if let Some(path) = &self.path {
            let mut line =
                serde_json::to_vec(&invite).map_err(|e| TtpError::Internal(e.to_string()))?;
            line.push(b'\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| TtpError::Internal(format!("outbox: {e}")))?;
            f.write_all(&line)
                .map_err(|e| TtpError::Internal(format!("outbox: {e}")))?;
        }
        log::info!("invite queued for {to}");
        inner.seen.insert(key);
        inner.entries.push(invite);
        Ok(true)
    }

    pub fn entries(&self) -> Vec<Invite> {
        self.inner
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entries
            .clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
