//! Content-addressed file storage.
//!
//! The chain records only [`ContentId`] strings and never looks inside them.

mod ipfs;
mod local;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ipfs::IpfsStore;
pub use local::LocalStore;

/// Opaque identifier returned by a store.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ContentId(String);

impl ContentId {
    /// Nonempty and printable ASCII without whitespace.
    pub fn new(text: impl Into<String>) -> Result<Self, StoreError> {
        let text = text.into();
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(StoreError::InvalidId(text));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.0)
    }
}

impl FromStr for ContentId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ContentId::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid content id {0:?}")]
    InvalidId(String),
    #[error("content must not be empty")]
    EmptyContent,
    #[error("content {0} not found")]
    NotFound(ContentId),
    #[error("content {id} failed integrity check (stored bytes hash to {actual})")]
    Integrity { id: ContentId, actual: String },
    #[error("storage error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("IPFS daemon at {endpoint} unreachable: {message}")]
    Transport { endpoint: String, message: String },
    #[error("IPFS daemon at {endpoint} returned {status}: {body}")]
    Daemon { endpoint: String, status: u16, body: String },
}

pub trait ContentStore: Send + Sync {
    fn put(&self, content: &[u8]) -> Result<ContentId, StoreError>;

    fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError>;

    /// True iff `get` would succeed without an integrity error.
    fn has(&self, id: &ContentId) -> Result<bool, StoreError>;

    fn backend(&self) -> Backend;

    /// Whether the backing storage is currently usable.
    fn reachable(&self) -> bool;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Local,
    Ipfs,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Local => "local",
            Backend::Ipfs => "ipfs",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Backend::Local),
            "ipfs" => Ok(Backend::Ipfs),
            other => Err(format!("unknown store backend {other:?} (expected local or ipfs)")),
        }
    }
}
