//! Cryptographic primitives used by every party of the protocol.
//!
//! - per-folder [`SecretKey`] derivation and deterministic keyword encryption
//!   ([`Trapdoor`]s)
//! - per-document [`DocumentKey`]s and AES-256-CTR document encryption
//! - RSA-OAEP key transport ([`WrappedKey`]) between the key service and users
//! - bcrypt passphrase hashing ([`PassHash`])
//!
//! Everything here is a pure function over immutable values.

mod keys;
mod passphrase;
mod symmetric;
mod wrap;

pub use keys::{
    derive_secret_key, generate_document_key, DocumentKey, Iv, SecretKey, DEFAULT_IV,
    DOCUMENT_KEY_LEN, SECRET_KEY_LEN,
};
pub use passphrase::{
    check_passphrase_policy, hash_passphrase, verify_passphrase, PassHash, DEFAULT_BCRYPT_COST,
    MAX_BCRYPT_COST, MIN_BCRYPT_COST,
};
pub use symmetric::{decrypt_document, encrypt_document, encrypt_keyword, Trapdoor};
pub use wrap::{
    generate_rsa_keypair, generate_rsa_keypair_with_bits, public_key_from_pem, public_key_to_pem,
    unwrap_key, wrap_key, wrap_key_with_rng, RsaKeyPair,
    WrappedKey, RSA_MODULUS_BITS,
};

pub use rsa::{RsaPrivateKey, RsaPublicKey};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("{what} must be {expected} bytes, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("derivation label must not be empty")]
    EmptyLabel,
    #[error("reference number must be positive")]
    InvalidRefNum,
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("invalid trapdoor: {0}")]
    InvalidTrapdoor(String),
    #[error("key format error: {0}")]
    KeyFormat(String),
    #[error("unable to unwrap key")]
    Unwrap,
    #[error("passphrase does not meet policy: {0}")]
    WeakPassphrase(&'static str),
    #[error("bcrypt cost {0} outside [{min}, {max}]", min = MIN_BCRYPT_COST, max = MAX_BCRYPT_COST)]
    CostRange(u32),
    #[error("malformed passphrase hash")]
    MalformedHash,
}
