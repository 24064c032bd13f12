//! Encrypted on-disk chain snapshots.
//!
//! Container layout (bit-exact):
//!
//! ```text
//! offset  len  field
//! 0       8    magic "DESTBLK1"
//! 8       1    version 0x01
//! 9       12   AES-GCM IV
//! 21      n    ciphertext of the canonical chain JSON
//! 21+n    16   GCM tag
//! ```
//!
//! The 9 header bytes are the additional authenticated data. The customary
//! file name is `blockchain.json`, but the contents are this binary
//! container, not JSON.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use crate::chain::{verify_links, Chain, ChainJson, VerifyFailure};
use crate::crypto::{aead_decrypt, aead_encrypt, AeadSealed, CryptoError, SymmetricKey, IV_LEN, TAG_LEN};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"DESTBLK1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = MAGIC.len() + 1;
/// Smallest well-formed container: header, IV and tag around an empty body.
pub const MIN_CONTAINER_LEN: usize = HEADER_LEN + IV_LEN + TAG_LEN;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("storage error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("container format error: {0}")]
    Format(String),
    #[error("container authentication failed (wrong key or tampered file)")]
    Authentication,
    #[error("decrypted chain is not valid JSON: {0}")]
    Corrupt(#[from] serde_json::Error),
    #[error("decrypted chain failed verification at {0}")]
    Integrity(VerifyFailure),
    #[error("refusing to persist an invalid chain ({0})")]
    InvalidChain(VerifyFailure),
    #[error("key configuration error: {0}")]
    Config(String),
}

/// Seals the canonical JSON of `chain` into a container.
pub fn seal_chain(chain: &Chain, key: &SymmetricKey) -> Result<Vec<u8>, PersistError> {
    // Chain values are verified on construction and append; re-check the
    // cheap structural part before committing it to disk.
    verify_links(chain.blocks()).map_err(PersistError::InvalidChain)?;
    let header = header();
    let sealed = aead_encrypt(key, &chain.to_canonical_json(), &header);
    let mut out = Vec::with_capacity(MIN_CONTAINER_LEN + sealed.ciphertext.len());
    out.extend_from_slice(&header);
    out.extend_from_slice(&sealed.to_wire());
    Ok(out)
}

/// Checks the header, authenticates, parses, and fully verifies.
pub fn open_chain(container: &[u8], key: &SymmetricKey) -> Result<Chain, PersistError> {
    let plaintext = open_plaintext(container, key)?;
    let parsed: ChainJson = serde_json::from_slice(&plaintext)?;
    Chain::from_blocks(parsed.blocks).map_err(PersistError::Integrity)
}

/// Header check and decryption only; returns the chain JSON bytes.
pub fn open_plaintext(container: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, PersistError> {
    if container.len() < MIN_CONTAINER_LEN {
        return Err(PersistError::Format(format!(
            "container is {} bytes, shorter than the {MIN_CONTAINER_LEN}-byte minimum",
            container.len()
        )));
    }
    let (head, body) = container.split_at(HEADER_LEN);
    if &head[..MAGIC.len()] != MAGIC {
        return Err(PersistError::Format("bad magic".into()));
    }
    if head[MAGIC.len()] != VERSION {
        return Err(PersistError::Format(format!("unsupported version {:#04x}", head[MAGIC.len()])));
    }
    let sealed = AeadSealed::from_wire(body).map_err(|e| PersistError::Format(e.to_string()))?;
    aead_decrypt(key, &sealed, head).map_err(|e| match e {
        CryptoError::AuthenticationFailed => PersistError::Authentication,
        other => PersistError::Format(other.to_string()),
    })
}

/// Seals under a fresh IV and atomically replaces `path`.
pub fn save_chain(chain: &Chain, key: &SymmetricKey, path: &Path) -> Result<(), PersistError> {
    let bytes = seal_chain(chain, key)?;
    write_atomic(path, &bytes).map_err(|source| PersistError::Io { path: path.to_path_buf(), source })
}

pub fn load_chain(path: &Path, key: &SymmetricKey) -> Result<Chain, PersistError> {
    let bytes = fs::read(path).map_err(|source| PersistError::Io { path: path.to_path_buf(), source })?;
    open_chain(&bytes, key)
}

fn header() -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..MAGIC.len()].copy_from_slice(MAGIC);
    h[MAGIC.len()] = VERSION;
    h
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeySource {
    File(PathBuf),
    Env(String),
}

/// Reads 64 hex characters (surrounding whitespace trimmed).
pub fn load_symmetric_key(source: &KeySource) -> Result<SymmetricKey, PersistError> {
    let text = match source {
        KeySource::File(path) => fs::read_to_string(path)
            .map_err(|e| PersistError::Config(format!("cannot read key file {}: {e}", path.display())))?,
        KeySource::Env(var) => {
            env::var(var).map_err(|_| PersistError::Config(format!("environment variable {var} is not set")))?
        }
    };
    SymmetricKey::from_hex(&text).map_err(|e| PersistError::Config(e.to_string()))
}
