use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use super::{Backend, ContentId, ContentStore, StoreError};
use crate::crypto::sha256;
use crate::fsutil::write_atomic;

const PREFIX: &str = "sha256:";

/// Blobs stored at `<root>/objects/<first two hex>/<hex>`, named by the
/// SHA-256 of their content.
#[derive(Clone, Debug)]
pub struct LocalStore {
    root: PathBuf,
}

impl LocalStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let objects = root.join("objects");
        fs::create_dir_all(&objects).map_err(|source| StoreError::Io { path: objects, source })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn id_for(content: &[u8]) -> ContentId {
        ContentId(format!("{PREFIX}{}", sha256(content).to_hex()))
    }

    /// Path of the blob for `id`, or `None` if `id` is not a local identifier.
    pub fn blob_path(&self, id: &ContentId) -> Option<PathBuf> {
        let hex = id.as_str().strip_prefix(PREFIX)?;
        if hex.len() != 64 || !hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return None;
        }
        Some(self.root.join("objects").join(&hex[..2]).join(hex))
    }
}

impl ContentStore for LocalStore {
    fn put(&self, content: &[u8]) -> Result<ContentId, StoreError> {
        if content.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let id = Self::id_for(content);
        let path = self.blob_path(&id).expect("generated id is well formed");
        if path.exists() {
            return Ok(id);
        }
        let dir = path.parent().expect("fan-out directory");
        fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        write_atomic(&path, content).map_err(|source| StoreError::Io { path, source })?;
        Ok(id)
    }

    fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let path = self.blob_path(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(StoreError::NotFound(id.clone())),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let actual = Self::id_for(&bytes);
        if &actual != id {
            return Err(StoreError::Integrity { id: id.clone(), actual: actual.0 });
        }
        Ok(bytes)
    }

    fn has(&self, id: &ContentId) -> Result<bool, StoreError> {
        match self.get(id) {
            Ok(_) => Ok(true),
            Err(StoreError::NotFound(_) | StoreError::Integrity { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn backend(&self) -> Backend {
        Backend::Local
    }

    fn reachable(&self) -> bool {
        self.root.join("objects").is_dir()
    }
}
