//! Opaque identifiers handed out by the storage backend.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

const ID_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

/// Length of generated identifiers, matching the shape of Drive file IDs.
pub const GENERATED_ID_LEN: usize = 33;

/// 33 URL-safe characters with a leading `1`, e.g. `12XiieX7PXW5ro9juDBIK_SXhFCvXJEnJ`.
pub fn random_id<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut id = String::with_capacity(GENERATED_ID_LEN);
    id.push('1');
    for _ in 1..GENERATED_ID_LEN {
        id.push(ID_ALPHABET[rng.gen_range(0..ID_ALPHABET.len())] as char);
    }
    id
}

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn generate() -> Self {
                $name(random_id(&mut rand::thread_rng()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

opaque_id!(
    /// Identifies one stored file for its whole lifetime.
    FileId
);
opaque_id!(
    /// Identifies a folder, the unit of sharing and of keyword keys.
    FolderId
);
