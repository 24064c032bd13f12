use std::time::Duration;

use reqwest::blocking::{multipart, Client};
use serde::Deserialize;

use super::{Backend, ContentId, ContentStore, StoreError};

/// Client for an existing IPFS daemon's HTTP RPC (`/api/v0/add`, `/api/v0/cat`).
///
/// The returned CID is treated as opaque truth; CID version and chunking are
/// whatever the daemon is configured to use.
///
/// Holds a blocking HTTP client: construct it outside of an async runtime and
/// call it from blocking contexts only.
#[derive(Clone, Debug)]
pub struct IpfsStore {
    base_url: String,
    client: Client,
}

#[derive(Deserialize)]
struct AddResponse {
    #[serde(rename = "Hash")]
    hash: String,
}

impl IpfsStore {
    pub fn new(base_url: impl Into<String>) -> Result<Self, StoreError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| StoreError::Transport { endpoint: base_url.clone(), message: e.to_string() })?;
        Ok(Self { base_url, client })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn transport(&self, endpoint: &str, err: reqwest::Error) -> StoreError {
        StoreError::Transport { endpoint: endpoint.to_string(), message: err.to_string() }
    }

    fn cat(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let endpoint = self.endpoint("/api/v0/cat");
        let resp = self
            .client
            .post(&endpoint)
            .query(&[("arg", id.as_str())])
            .send()
            .map_err(|e| self.transport(&endpoint, e))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            if body.to_ascii_lowercase().contains("not found") {
                return Err(StoreError::NotFound(id.clone()));
            }
            return Err(StoreError::Daemon { endpoint, status: status.as_u16(), body });
        }
        Ok(resp.bytes().map_err(|e| self.transport(&endpoint, e))?.to_vec())
    }
}

impl ContentStore for IpfsStore {
    fn put(&self, content: &[u8]) -> Result<ContentId, StoreError> {
        if content.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let endpoint = self.endpoint("/api/v0/add");
        let form = multipart::Form::new().part("file", multipart::Part::bytes(content.to_vec()).file_name("file"));
        let resp = self
            .client
            .post(&endpoint)
            .multipart(form)
            .send()
            .map_err(|e| self.transport(&endpoint, e))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| self.transport(&endpoint, e))?;
        if !status.is_success() {
            return Err(StoreError::Daemon { endpoint, status: status.as_u16(), body });
        }
        // The daemon may stream one JSON object per line; the last names the root.
        let line = body.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or_default();
        let parsed: AddResponse = serde_json::from_str(line).map_err(|e| StoreError::Daemon {
            endpoint: endpoint.clone(),
            status: status.as_u16(),
            body: format!("unparseable add response ({e}): {body}"),
        })?;
        ContentId::new(parsed.hash)
    }

    fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        self.cat(id)
    }

    fn has(&self, id: &ContentId) -> Result<bool, StoreError> {
        match self.cat(id) {
            Ok(_) => Ok(true),
            Err(StoreError::NotFound(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn backend(&self) -> Backend {
        Backend::Ipfs
    }

    fn reachable(&self) -> bool {
        self.client.post(self.endpoint("/api/v0/version")).send().is_ok_and(|r| r.status().is_success())
    }
}
