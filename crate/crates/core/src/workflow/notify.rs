use std::fmt;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Progress stages, in the order a run may emit them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    SecretKeyGenerated,
    FileUploaded,
    IndexGenerated,
    FilesRetrieved,
    FileShared,
    TrapdoorIssued,
    SearchComplete,
    KeyReleased,
    Decrypted,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::SecretKeyGenerated => "secret key generated",
            Stage::FileUploaded => "file uploaded",
            Stage::IndexGenerated => "inverted index generated",
            Stage::FilesRetrieved => "files retrieved",
            Stage::FileShared => "file shared",
            Stage::TrapdoorIssued => "trapdoor issued",
            Stage::SearchComplete => "search complete",
            Stage::KeyReleased => "key released",
            Stage::Decrypted => "decrypted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub stage: Stage,
    pub message: String,
    pub timestamp: DateTime<Utc>,
}

impl Notification {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Notification {
            stage,
            message: message.into(),
            timestamp: Utc::now(),
        }
    }
}

pub trait Observer: Send + Sync {
    fn notify(&self, n: &Notification);
}

impl<F: Fn(&Notification) + Send + Sync> Observer for F {
    fn notify(&self, n: &Notification) {
        self(n)
    }
}

pub struct NullObserver;

impl Observer for NullObserver {
    fn notify(&self, _: &Notification) {}
}

/// Keeps every notification, for tests and transcripts.
#[derive(Default)]
pub struct CollectingObserver(Mutex<Vec<Notification>>);

impl CollectingObserver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn take(&self) -> Vec<Notification> {
        std::mem::take(&mut *self.0.lock().unwrap_or_else(|p| p.into_inner()))
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.0
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .map(|n| n.stage)
            .collect()
    }
}

impl Observer for CollectingObserver {
    fn notify(&self, n: &Notification) {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).push(n.clone());
    }
}
