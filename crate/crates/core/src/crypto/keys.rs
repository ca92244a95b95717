use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha384};

use super::CryptoError;
use crate::encoding::{b64_decode, b64_encode};

pub const SECRET_KEY_LEN: usize = 48;
pub const DOCUMENT_KEY_LEN: usize = 32;

const MASTER_RANDOMNESS_LEN: usize = 32;
const PEER_RANDOMNESS_LEN: usize = 16;

/// Counter-mode initialization vector used for document encryption.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Iv(pub [u8; 16]);

/// The IV shipped in the default client configuration.
pub const DEFAULT_IV: Iv = Iv([
    32, 27, 169, 241, 200, 189, 141, 73, 29, 56, 165, 241, 66, 53, 42, 108,
]);

impl Iv {
    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s.trim()).map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
        let arr: [u8; 16] = bytes.as_slice().try_into().map_err(|_| CryptoError::Length {
            what: "iv",
            expected: 16,
            actual: bytes.len(),
        })?;
        Ok(Iv(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl Default for Iv {
    fn default() -> Self {
        DEFAULT_IV
    }
}

impl fmt::Debug for Iv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Iv({})", self.to_hex())
    }
}

impl Serialize for Iv {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Iv {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Iv::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Per-folder 384-bit key: `k_sym ‖ iv ‖ k_hash`, 16 bytes each.
///
/// Only `k_sym` and `iv` take part in keyword encryption. `k_hash` is carried
/// so the layout stays 384 bits but nothing consumes it.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    k_sym: [u8; 16],
    iv: [u8; 16],
    k_hash: [u8; 16],
}

impl SecretKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != SECRET_KEY_LEN {
            return Err(CryptoError::Length {
                what: "secret key",
                expected: SECRET_KEY_LEN,
                actual: bytes.len(),
            });
        }
        let mut k_sym = [0u8; 16];
        let mut iv = [0u8; 16];
        let mut k_hash = [0u8; 16];
        k_sym.copy_from_slice(&bytes[..16]);
        iv.copy_from_slice(&bytes[16..32]);
        k_hash.copy_from_slice(&bytes[32..]);
        Ok(SecretKey { k_sym, iv, k_hash })
    }

    pub fn to_bytes(&self) -> [u8; SECRET_KEY_LEN] {
        let mut out = [0u8; SECRET_KEY_LEN];
        out[..16].copy_from_slice(&self.k_sym);
        out[16..32].copy_from_slice(&self.iv);
        out[32..].copy_from_slice(&self.k_hash);
        out
    }

    pub fn k_sym(&self) -> &[u8; 16] {
        &self.k_sym
    }

    pub fn iv(&self) -> Iv {
        Iv(self.iv)
    }

    pub fn k_hash(&self) -> &[u8; 16] {
        &self.k_hash
    }

    /// Fresh key derived from OS randomness under `label`.
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R, label: &str) -> Result<Self, CryptoError> {
        let mut master = [0u8; MASTER_RANDOMNESS_LEN];
        let mut client = [0u8; PEER_RANDOMNESS_LEN];
        let mut server = [0u8; PEER_RANDOMNESS_LEN];
        for buf in [&mut master[..], &mut client[..], &mut server[..]] {
            rng.try_fill_bytes(buf)
                .map_err(|e| CryptoError::Entropy(e.to_string()))?;
        }
        derive_secret_key(&master, label, &client, &server)
    }

    pub fn to_base64(&self) -> String {
        b64_encode(&self.to_bytes())
    }

    pub fn from_base64(s: &str) -> Result<Self, CryptoError> {
        let bytes = b64_decode(s).map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

impl Serialize for SecretKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for SecretKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SecretKey::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

/// `SHA-384(master ‖ label ‖ client ‖ server)` split into three 16-byte slices.
pub fn derive_secret_key(
    master_randomness: &[u8],
    label: &str,
    client_randomness: &[u8],
    server_randomness: &[u8],
) -> Result<SecretKey, CryptoError> {
    check_len("master randomness", master_randomness, MASTER_RANDOMNESS_LEN)?;
    check_len("client randomness", client_randomness, PEER_RANDOMNESS_LEN)?;
    check_len("server randomness", server_randomness, PEER_RANDOMNESS_LEN)?;
    if label.is_empty() {
        return Err(CryptoError::EmptyLabel);
    }
    let digest = Sha384::new()
        .chain_update(master_randomness)
        .chain_update(label.as_bytes())
        .chain_update(client_randomness)
        .chain_update(server_randomness)
        .finalize();
    SecretKey::from_bytes(&digest)
}

fn check_len(what: &'static str, bytes: &[u8], expected: usize) -> Result<(), CryptoError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(CryptoError::Length {
            what,
            expected,
            actual: bytes.len(),
        })
    }
}

/// A random 256-bit document key and the reference number that names it.
/// One key encrypts exactly one document.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentKey {
    #[serde(with = "crate::encoding::base64_array")]
    key: [u8; DOCUMENT_KEY_LEN],
    ref_num: u64,
}

impl DocumentKey {
    pub fn new(key: [u8; DOCUMENT_KEY_LEN], ref_num: u64) -> Result<Self, CryptoError> {
        if ref_num == 0 {
            return Err(CryptoError::InvalidRefNum);
        }
        Ok(DocumentKey { key, ref_num })
    }

    pub fn key(&self) -> &[u8; DOCUMENT_KEY_LEN] {
        &self.key
    }

    pub fn ref_num(&self) -> u64 {
        self.ref_num
    }
}

impl fmt::Debug for DocumentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DocumentKey")
            .field("key", &"<redacted>")
            .field("ref_num", &self.ref_num)
            .finish()
    }
}

pub fn generate_document_key<R: RngCore + CryptoRng>(
    ref_num: u64,
    rng: &mut R,
) -> Result<DocumentKey, CryptoError> {
    let mut key = [0u8; DOCUMENT_KEY_LEN];
    rng.try_fill_bytes(&mut key)
        .map_err(|e| CryptoError::Entropy(e.to_string()))?;
    DocumentKey::new(key, ref_num)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    // SHA-384 over 32 zero bytes ‖ "cryptosearch-v1" ‖ 16 zero bytes ‖ 16 zero
    // bytes, computed with an independent SHA-384 implementation.
    const ZERO_DIGEST: &str = "2be130cac3791f8464aa54ba53f198f65b005d094f8b21d0ec973c9d131e2b0540684451567bd497650f3d77ec8db9be";
    // Same, with bit 0 of client randomness flipped.
    const FLIPPED_DIGEST: &str = "f4135b07800e99f6182695dc2f027f7665a56a9e031a017bc0a597837d76b1e8ef72c0de2cddc52d153bb0e1f9aca1bd";

    #[test]
    fn derive_matches_reference_digest() {
        let sk = derive_secret_key(&[0; 32], "cryptosearch-v1", &[0; 16], &[0; 16]).unwrap();
        let expected = hex::decode(ZERO_DIGEST).unwrap();
        assert_eq!(sk.to_bytes().as_slice(), expected.as_slice());
        assert_eq!(sk.k_sym().as_slice(), &expected[..16]);
        assert_eq!(sk.iv().0.as_slice(), &expected[16..32]);
        assert_eq!(sk.k_hash().as_slice(), &expected[32..]);
    }

    #[test]
    fn derive_is_deterministic() {
        let a = derive_secret_key(&[7; 32], "l", &[1; 16], &[2; 16]).unwrap();
        let b = derive_secret_key(&[7; 32], "l", &[1; 16], &[2; 16]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flipped_client_bit_changes_key() {
        let mut client = [0u8; 16];
        client[0] ^= 1;
        let sk = derive_secret_key(&[0; 32], "cryptosearch-v1", &client, &[0; 16]).unwrap();
        assert_eq!(hex::encode(sk.to_bytes()), FLIPPED_DIGEST);
        assert_ne!(FLIPPED_DIGEST, ZERO_DIGEST);
    }

    #[test]
    fn derive_rejects_bad_lengths() {
        assert!(matches!(
            derive_secret_key(&[0; 31], "l", &[0; 16], &[0; 16]),
            Err(CryptoError::Length { what: "master randomness", .. })
        ));
        assert!(matches!(
            derive_secret_key(&[0; 32], "l", &[0; 15], &[0; 16]),
            Err(CryptoError::Length { .. })
        ));
        assert!(matches!(
            derive_secret_key(&[0; 32], "l", &[0; 16], &[0; 17]),
            Err(CryptoError::Length { .. })
        ));
        assert_eq!(
            derive_secret_key(&[0; 32], "", &[0; 16], &[0; 16]),
            Err(CryptoError::EmptyLabel)
        );
    }

    #[test]
    fn secret_key_base64_round_trip() {
        let sk = derive_secret_key(&[3; 32], "x", &[4; 16], &[5; 16]).unwrap();
        let back = SecretKey::from_base64(&sk.to_base64()).unwrap();
        assert_eq!(sk, back);
        assert!(SecretKey::from_bytes(&[0; 47]).is_err());
    }

    #[test]
    fn document_key_binds_ref_num() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let dk = generate_document_key(4, &mut rng).unwrap();
        assert_eq!(dk.ref_num(), 4);
        assert_eq!(dk.key().len(), 32);
        assert_eq!(
            generate_document_key(0, &mut rng),
            Err(CryptoError::InvalidRefNum)
        );
    }

    #[test]
    fn seeded_rng_gives_identical_keys() {
        let a = generate_document_key(9, &mut ChaCha20Rng::seed_from_u64(42)).unwrap();
        let b = generate_document_key(9, &mut ChaCha20Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ten_thousand_keys_are_distinct() {
        let mut rng = rand::rngs::OsRng;
        let mut seen = HashSet::new();
        for i in 1..=10_000u64 {
            let dk = generate_document_key(i, &mut rng).unwrap();
            assert!(seen.insert(*dk.key()), "collision at {i}");
        }
    }

    struct FailingRng;
    impl RngCore for FailingRng {
        fn next_u32(&mut self) -> u32 {
            unreachable!()
        }
        fn next_u64(&mut self) -> u64 {
            unreachable!()
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {
            unreachable!()
        }
        fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
            Err(rand::Error::new("drained"))
        }
    }
    impl CryptoRng for FailingRng {}

    #[test]
    fn entropy_failure_surfaces() {
        assert!(matches!(
            generate_document_key(1, &mut FailingRng),
            Err(CryptoError::Entropy(_))
        ));
    }

    #[test]
    fn debug_output_is_redacted() {
        let dk = DocumentKey::new([0xab; 32], 1).unwrap();
        assert!(!format!("{dk:?}").contains("ab"));
    }
}
