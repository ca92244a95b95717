use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// What `login` leaves behind for later commands. The private key is the
/// per-session RSA pair, cached so each download does not generate a new
/// one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionFile {
    pub email: String,
    pub token: String,
    pub expires_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_key_pem: Option<String>,
}

impl SessionFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CliError::auth("not logged in; run `cryptosearch login` first"))
            }
            Err(e) => return Err(CliError::internal(format!("{}: {e}", path.display()))),
        };
        let s: SessionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::auth(format!("session file {} is unreadable ({e}); log in again", path.display())))?;
        if s.expires_at <= Utc::now() {
            return Err(CliError::auth("session expired; log in again"));
        }
        Ok(s)
    }

    /// Writes owner-readable only, via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: io::Error| CliError::internal(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp).map_err(io)?;
        let body = serde_json::to_vec_pretty(self).expect("session serializes");
        f.write_all(&body).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn remove(path: &Path) -> Result<bool, CliError> {
        match fs::remove_file(path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(CliError::internal(format!("{}: {e}", path.display()))),
        }
    }
}
