use std::fmt;

use aes::cipher::{KeyIvInit, StreamCipher};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::keys::{DocumentKey, Iv, SecretKey};
use super::CryptoError;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

fn apply_keystream(key: &[u8; 32], iv: &Iv, data: &[u8]) -> Vec<u8> {
    let mut out = data.to_vec();
    let mut cipher = Aes256Ctr::new(key.into(), (&iv.0).into());
    cipher.apply_keystream(&mut out);
    out
}

/// AES-256-CTR under the document's own key. Length preserving, no integrity.
pub fn encrypt_document(plaintext: &[u8], key: &DocumentKey, iv: &Iv) -> Vec<u8> {
    apply_keystream(key.key(), iv, plaintext)
}

pub fn decrypt_document(ciphertext: &[u8], key: &DocumentKey, iv: &Iv) -> Vec<u8> {
    apply_keystream(key.key(), iv, ciphertext)
}

/// Deterministic encryption of a keyword under a folder key.
///
/// The 128-bit `k_sym` is stretched to an AES-256 key as `SHA-256(k_sym)` and
/// the key's own IV seeds the counter. Only surrounding whitespace is trimmed;
/// matching is case sensitive.
pub fn encrypt_keyword(keyword: &str, sk: &SecretKey) -> Result<Trapdoor, CryptoError> {
    let keyword = keyword.trim();
    if keyword.is_empty() {
        return Err(CryptoError::EmptyKeyword);
    }
    let key: [u8; 32] = Sha256::digest(sk.k_sym()).into();
    let ct = apply_keystream(&key, &sk.iv(), keyword.as_bytes());
    Ok(Trapdoor(hex::encode(ct)))
}

/// Encrypted keyword, as lowercase hex. Used verbatim as an index key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Trapdoor(String);

impl Trapdoor {
    pub fn parse(s: &str) -> Result<Self, CryptoError> {
        if s.is_empty() {
            return Err(CryptoError::InvalidTrapdoor("empty".into()));
        }
        if !s.len().is_multiple_of(2) {
            return Err(CryptoError::InvalidTrapdoor(format!("odd length {}", s.len())));
        }
        if !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(CryptoError::InvalidTrapdoor(format!("not lowercase hex: {s:?}")));
        }
        Ok(Trapdoor(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Trapdoor {
    type Error = CryptoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Trapdoor::parse(&s)
    }
}

impl From<Trapdoor> for String {
    fn from(t: Trapdoor) -> String {
        t.0
    }
}

impl fmt::Display for Trapdoor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Trapdoor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Trapdoor({})", self.0)
    }
}
