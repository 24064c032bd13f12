//! AES-256-GCM with 96-bit IVs and 128-bit tags.

use std::fmt;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Key, Nonce, Tag};
use rand::rngs::OsRng;
use rand::RngCore;

use super::CryptoError;

pub const KEY_LEN: usize = 32;
pub const IV_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::Length { what: "symmetric key", expected: KEY_LEN, got: bytes.len() })?;
        Ok(Self(arr))
    }

    /// Exactly 64 hex characters; surrounding whitespace is ignored.
    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let s = s.trim();
        if s.len() != KEY_LEN * 2 {
            return Err(CryptoError::Length { what: "symmetric key hex", expected: KEY_LEN * 2, got: s.len() });
        }
        Self::from_bytes(&hex::decode(s)?)
    }

    pub fn generate() -> Self {
        let mut bytes = [0u8; KEY_LEN];
        OsRng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new(&Key::<Aes256Gcm>::from(self.0))
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AeadSealed {
    pub iv: [u8; IV_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl AeadSealed {
    /// Splits `iv || ciphertext || tag`.
    pub fn from_wire(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < IV_LEN + TAG_LEN {
            return Err(CryptoError::Truncated { needed: IV_LEN + TAG_LEN, got: bytes.len() });
        }
        let (iv, rest) = bytes.split_at(IV_LEN);
        let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Self {
            iv: iv.try_into().expect("split"),
            ciphertext: ct.to_vec(),
            tag: tag.try_into().expect("split"),
        })
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IV_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }
}

/// Encrypts under a fresh random IV.
pub fn aead_encrypt(key: &SymmetricKey, plaintext: &[u8], aad: &[u8]) -> AeadSealed {
    let mut iv = [0u8; IV_LEN];
    OsRng.fill_bytes(&mut iv);
    seal_with_iv(key, &iv, plaintext, aad)
}

/// Encrypts under a caller-supplied IV. Never reuse an IV with the same key;
/// this entry point exists for known-answer tests.
pub fn seal_with_iv(key: &SymmetricKey, iv: &[u8; IV_LEN], plaintext: &[u8], aad: &[u8]) -> AeadSealed {
    let mut buf = plaintext.to_vec();
    let tag = key
        .cipher()
        .encrypt_in_place_detached(&Nonce::from(*iv), aad, &mut buf)
        .expect("plaintext within the GCM length limit");
    AeadSealed { iv: *iv, ciphertext: buf, tag: tag.into() }
}

/// Releases the plaintext only after the recomputed tag matches (constant-time
/// comparison inside the backend).
pub fn aead_decrypt(key: &SymmetricKey, sealed: &AeadSealed, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let mut buf = sealed.ciphertext.clone();
    key.cipher()
        .decrypt_in_place_detached(&Nonce::from(sealed.iv), aad, &mut buf, &Tag::from(sealed.tag))
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_iv_per_encryption() {
        let key = SymmetricKey::generate();
        let a = aead_encrypt(&key, b"same plaintext", b"");
        let b = aead_encrypt(&key, b"same plaintext", b"");
        assert_ne!(a.iv, b.iv);
        assert_ne!(a.ciphertext, b.ciphertext);
        assert_eq!(a.ciphertext.len(), 14);
    }

    #[test]
    fn aad_binding() {
        let key = SymmetricKey::generate();
        let sealed = aead_encrypt(&key, b"payload", b"aad-1");
        assert_eq!(aead_decrypt(&key, &sealed, b"aad-1").unwrap(), b"payload");
        assert!(matches!(aead_decrypt(&key, &sealed, b"aad-2"), Err(CryptoError::AuthenticationFailed)));
    }

    #[test]
    fn truncated_wire_form() {
        assert!(matches!(AeadSealed::from_wire(&[0u8; 27]), Err(CryptoError::Truncated { .. })));
        let empty = AeadSealed::from_wire(&[0u8; 28]).unwrap();
        assert!(empty.ciphertext.is_empty());
    }

    #[test]
    fn key_hex_length() {
        assert!(SymmetricKey::from_hex(&"ab".repeat(32)).is_ok());
        assert!(SymmetricKey::from_hex(&format!("{}\n", "ab".repeat(32))).is_ok());
        assert!(SymmetricKey::from_hex(&"a".repeat(63)).is_err());
        assert!(SymmetricKey::from_hex(&"a".repeat(66)).is_err());
    }
}
