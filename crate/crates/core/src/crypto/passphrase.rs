use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CryptoError;

pub const MIN_BCRYPT_COST: u32 = 4;
pub const MAX_BCRYPT_COST: u32 = 31;
pub const DEFAULT_BCRYPT_COST: u32 = 10;

const BCRYPT_HASH_LEN: usize = 60;
const BCRYPT_B64: &[u8] = b"./ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// A bcrypt hash in modular crypt format, e.g. `$2b$10$<22 salt><31 hash>`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PassHash(String);

impl PassHash {
    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        let b = s.as_bytes();
        if b.len() != BCRYPT_HASH_LEN || b[0] != b'$' || b[3] != b'$' || b[6] != b'$' {
            return Err(CryptoError::MalformedHash);
        }
        if !matches!(&s[1..3], "2a" | "2b" | "2x" | "2y") {
            return Err(CryptoError::MalformedHash);
        }
        let cost: u32 = s[4..6].parse().map_err(|_| CryptoError::MalformedHash)?;
        if !(MIN_BCRYPT_COST..=MAX_BCRYPT_COST).contains(&cost) {
            return Err(CryptoError::MalformedHash);
        }
        if !b[7..].iter().all(|c| BCRYPT_B64.contains(c)) {
            return Err(CryptoError::MalformedHash);
        }
        Ok(PassHash(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn cost(&self) -> u32 {
        self.0[4..6].parse().expect("validated on construction")
    }
}

impl FromStr for PassHash {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PassHash::parse(s)
    }
}

impl TryFrom<String> for PassHash {
    type Error = CryptoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        PassHash::parse(&s)
    }
}

impl From<PassHash> for String {
    fn from(h: PassHash) -> String {
        h.0
    }
}

impl fmt::Debug for PassHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PassHash({}…)", &self.0[..7])
    }
}

/// At least 8 characters with an uppercase letter, a lowercase letter, a digit
/// and a special character.
pub fn check_passphrase_policy(passphrase: &str) -> Result<(), CryptoError> {
    if passphrase.chars().count() < 8 {
        return Err(CryptoError::WeakPassphrase("must be at least 8 characters"));
    }
    if !passphrase.chars().any(char::is_uppercase) {
        return Err(CryptoError::WeakPassphrase("must contain an uppercase letter"));
    }
    if !passphrase.chars().any(char::is_lowercase) {
        return Err(CryptoError::WeakPassphrase("must contain a lowercase letter"));
    }
    if !passphrase.chars().any(|c| c.is_ascii_digit()) {
        return Err(CryptoError::WeakPassphrase("must contain a digit"));
    }
    if !passphrase.chars().any(|c| !c.is_alphanumeric() && !c.is_whitespace()) {
        return Err(CryptoError::WeakPassphrase("must contain a special character"));
    }
    Ok(())
}

pub fn hash_passphrase(passphrase: &str, cost: u32) -> Result<PassHash, CryptoError> {
    check_passphrase_policy(passphrase)?;
    if !(MIN_BCRYPT_COST..=MAX_BCRYPT_COST).contains(&cost) {
        return Err(CryptoError::CostRange(cost));
    }
    let hashed = bcrypt::hash(passphrase, cost).map_err(|e| CryptoError::Entropy(e.to_string()))?;
    PassHash::parse(&hashed)
}

pub fn verify_passphrase(passphrase: &str, hash: &PassHash) -> Result<bool, CryptoError> {
    bcrypt::verify(passphrase, hash.as_str()).map_err(|_| CryptoError::MalformedHash)
}
