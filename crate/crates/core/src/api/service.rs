use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::chain::{Block, Candidate, Chain, ChainError, UploaderRegistry, VerifyFailure};
use crate::crypto::{ecdsa_verify, Digest, KeyPair, PublicKey, Role, Signature, SymmetricKey};
use crate::persistence::{save_chain, PersistError};
use crate::store::{Backend, ContentId, ContentStore, StoreError};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub ttl_ms: u64,
    pub max_pending: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { ttl_ms: 60_000, max_pending: 64 }
    }
}

/// Where committed chains are written.
#[derive(Clone, Debug)]
pub struct PersistTarget {
    pub path: PathBuf,
    pub key: SymmetricKey,
}

#[derive(Clone, Debug)]
pub struct PendingUpload {
    pub candidate: Candidate,
    pub uploader_pub: PublicKey,
    pub created_at: u64,
    pub ttl_ms: u64,
}

impl PendingUpload {
    pub fn expires_at(&self) -> u64 {
        self.created_at.saturating_add(self.ttl_ms)
    }

    fn live_at(&self, now: u64) -> bool {
        now < self.expires_at()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareResponse {
    pub candidate_hash: Digest,
    pub index: u64,
    pub cid: ContentId,
    pub expires_at: u64,
    /// The remaining preimage fields, so the uploader can recompute the hash it signs.
    pub timestamp_ms: u64,
    pub prev_hash: Digest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommitRequest {
    pub candidate_hash: Digest,
    pub sig_uploader: Signature,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommitResponse {
    pub block: Block,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<VerifyFailure>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub backend: Backend,
    pub store_reachable: bool,
    pub chain_length: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("uploader key is not authorized")]
    Unauthorized,
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("content store failure: {0}")]
    Store(#[source] StoreError),
    #[error("no pending upload with candidate hash {0}")]
    UnknownCandidate(Digest),
    #[error("pending upload {0} has expired")]
    Expired(Digest),
    #[error("{0} signature rejected")]
    BadSignature(Role),
    #[error("candidate is stale (tip moved); prepare the upload again")]
    StaleTip,
    #[error("{0} not found")]
    NotFound(String),
    #[error("integrity alert for {cid}: {source}")]
    Integrity { cid: ContentId, source: StoreError },
    #[error("persisting chain failed: {0}")]
    Persist(#[source] PersistError),
    #[error("chain rejected block: {0}")]
    Chain(#[source] ChainError),
    #[error("service misconfigured: {0}")]
    Config(String),
}

impl ServiceError {
    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthorized => 403,
            ServiceError::BadRequest(_) | ServiceError::BadSignature(_) => 400,
            ServiceError::Store(_) => 502,
            ServiceError::UnknownCandidate(_) | ServiceError::NotFound(_) => 404,
            ServiceError::Expired(_) => 410,
            ServiceError::StaleTip => 409,
            ServiceError::Integrity { .. }
            | ServiceError::Persist(_)
            | ServiceError::Chain(_)
            | ServiceError::Config(_) => 500,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Store(_) => "store",
            ServiceError::UnknownCandidate(_) => "unknown_candidate",
            ServiceError::Expired(_) => "expired",
            ServiceError::BadSignature(_) => "bad_signature",
            ServiceError::StaleTip => "stale_tip",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Integrity { .. } => "integrity",
            ServiceError::Persist(_) => "persist",
            ServiceError::Chain(_) => "chain",
            ServiceError::Config(_) => "config",
        }
    }

    pub fn role(&self) -> Option<Role> {
        match self {
            ServiceError::BadSignature(role) => Some(*role),
            ServiceError::Unauthorized => Some(Role::Uploader),
            _ => None,
        }
    }
}

struct ChainState {
    chain: Chain,
    // first block referencing each content id
    cids: HashMap<ContentId, u64>,
}

impl ChainState {
    fn new(chain: Chain) -> Self {
        let mut cids = HashMap::new();
        for b in chain.blocks() {
            if let Some(cid) = &b.cid {
                cids.entry(cid.clone()).or_insert(b.index);
            }
        }
        Self { chain, cids }
    }
}

/// The admin side of the two-phase upload: builds candidates, co-signs
/// commits, appends, persists and serves retrievals.
///
/// All chain mutations go through one write lock, so of several commits
/// built on the same tip at most one succeeds.
pub struct Service {
    state: RwLock<ChainState>,
    pending: Mutex<Vec<PendingUpload>>,
    store: Arc<dyn ContentStore>,
    admin: KeyPair,
    uploaders: UploaderRegistry,
    persist: Option<PersistTarget>,
    config: ServiceConfig,
    clock: Clock,
}

impl Service {
    pub fn new(
        chain: Chain,
        store: Arc<dyn ContentStore>,
        admin: KeyPair,
        uploaders: UploaderRegistry,
        persist: Option<PersistTarget>,
        config: ServiceConfig,
    ) -> Result<Self, ServiceError> {
        match chain.admin_key() {
            None => return Err(ServiceError::Config("chain is not initialized".into())),
            Some(k) if k != admin.public_key() => {
                return Err(ServiceError::Config("admin key does not match the chain's genesis owner".into()))
            }
            Some(_) => {}
        }
        if config.max_pending == 0 {
            return Err(ServiceError::Config("max_pending must be at least 1".into()));
        }
        Ok(Self {
            state: RwLock::new(ChainState::new(chain)),
            pending: Mutex::new(Vec::new()),
            store,
            admin,
            uploaders,
            persist,
            config,
            clock: Arc::new(now_ms),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn ContentStore> {
        &self.store
    }

    /// Stores the file and registers a candidate block over the current tip.
    pub fn prepare(&self, uploader_pub: &PublicKey, content: &[u8]) -> Result<PrepareResponse, ServiceError> {
        if !self.uploaders.is_authorized(uploader_pub) {
            return Err(ServiceError::Unauthorized);
        }
        if content.is_empty() {
            return Err(ServiceError::BadRequest("empty upload".into()));
        }
        let cid = self.store.put(content).map_err(ServiceError::Store)?;
        let now = (self.clock)();
        let candidate = {
            let state = self.state.read().expect("chain lock poisoned");
            state.chain.build_candidate(cid, now).map_err(ServiceError::Chain)?
        };
        let entry = PendingUpload { candidate, uploader_pub: *uploader_pub, created_at: now, ttl_ms: self.config.ttl_ms };
        let response = PrepareResponse {
            candidate_hash: entry.candidate.hash,
            index: entry.candidate.index,
            cid: entry.candidate.cid.clone(),
            expires_at: entry.expires_at(),
            timestamp_ms: entry.candidate.timestamp_ms,
            prev_hash: entry.candidate.prev_hash,
        };
        let mut pending = self.pending.lock().expect("pending lock poisoned");
        pending.retain(|p| p.live_at(now) && p.candidate.hash != entry.candidate.hash);
        pending.push(entry);
        if pending.len() > self.config.max_pending {
            let excess = pending.len() - self.config.max_pending;
            pending.drain(..excess);
        }
        Ok(response)
    }

    /// Checks the uploader signature, co-signs as admin, appends and persists.
    pub fn commit(&self, candidate_hash: &Digest, sig_uploader: &Signature) -> Result<Block, ServiceError> {
        let now = (self.clock)();
        let entry = {
            let mut pending = self.pending.lock().expect("pending lock poisoned");
            let pos = pending
                .iter()
                .position(|p| &p.candidate.hash == candidate_hash)
                .ok_or(ServiceError::UnknownCandidate(*candidate_hash))?;
            if !pending[pos].live_at(now) {
                pending.remove(pos);
                return Err(ServiceError::Expired(*candidate_hash));
            }
            pending[pos].clone()
        };
        match ecdsa_verify(&entry.uploader_pub, candidate_hash, sig_uploader) {
            Ok(true) => {}
            _ => return Err(ServiceError::BadSignature(Role::Uploader)),
        }

        let mut state = self.state.write().expect("chain lock poisoned");
        let tip = state.chain.tip().map(|b| b.hash);
        if tip != Some(entry.candidate.prev_hash) {
            self.forget(candidate_hash);
            return Err(ServiceError::StaleTip);
        }
        let sig_admin = self.admin.sign(candidate_hash);
        let len_before = state.chain.len();
        let block = state
            .chain
            .append_block(
                &entry.candidate,
                sig_uploader,
                &sig_admin,
                &entry.uploader_pub,
                &self.admin.public_key(),
                &self.uploaders,
            )
            .map_err(|e| match e {
                ChainError::StaleTip { .. } => ServiceError::StaleTip,
                ChainError::Signature(role) => ServiceError::BadSignature(role),
                ChainError::Unauthorized(Role::Uploader) => ServiceError::Unauthorized,
                other => ServiceError::Chain(other),
            })?
            .clone();
        if let Some(target) = &self.persist {
            if let Err(e) = save_chain(&state.chain, &target.key, &target.path) {
                state.chain.truncate(len_before);
                return Err(ServiceError::Persist(e));
            }
        }
        let cid = block.cid.clone().expect("content block has a cid");
        state.cids.entry(cid).or_insert(block.index);
        drop(state);
        self.forget(candidate_hash);
        Ok(block)
    }

    /// Runs prepare and commit in-process with a locally held uploader key.
    pub fn upload_with(&self, uploader: &KeyPair, content: &[u8]) -> Result<Block, ServiceError> {
        let prepared = self.prepare(&uploader.public_key(), content)?;
        let sig = uploader.sign(&prepared.candidate_hash);
        self.commit(&prepared.candidate_hash, &sig)
    }

    fn forget(&self, candidate_hash: &Digest) {
        self.pending.lock().expect("pending lock poisoned").retain(|p| &p.candidate.hash != candidate_hash);
    }

    pub fn pending_len(&self) -> usize {
        self.pending.lock().expect("pending lock poisoned").len()
    }

    /// Only content referenced by some block is served.
    pub fn file(&self, cid: &ContentId) -> Result<(u64, Vec<u8>), ServiceError> {
        let index = {
            let state = self.state.read().expect("chain lock poisoned");
            *state.cids.get(cid).ok_or_else(|| ServiceError::NotFound(format!("content {cid}")))?
        };
        match self.store.get(cid) {
            Ok(bytes) => Ok((index, bytes)),
            Err(e @ (StoreError::NotFound(_) | StoreError::Integrity { .. })) => {
                tracing::error!(%cid, index, error = %e, "on-chain content missing or corrupted in store");
                Err(ServiceError::Integrity { cid: cid.clone(), source: e })
            }
            Err(e) => Err(ServiceError::Store(e)),
        }
    }

    pub fn block(&self, index: u64) -> Result<Block, ServiceError> {
        let state = self.state.read().expect("chain lock poisoned");
        state.chain.get(index).cloned().ok_or_else(|| ServiceError::NotFound(format!("block {index}")))
    }

    pub fn chain_snapshot(&self) -> Chain {
        self.state.read().expect("chain lock poisoned").chain.clone()
    }

    pub fn chain_len(&self) -> usize {
        self.state.read().expect("chain lock poisoned").chain.len()
    }

    pub fn verify(&self) -> VerifyResponse {
        let chain = self.chain_snapshot();
        match chain.verify() {
            Ok(()) => VerifyResponse { ok: true, first_failure: None },
            Err(f) => VerifyResponse { ok: false, first_failure: Some(f) },
        }
    }

    pub fn health(&self) -> HealthResponse {
        let store_reachable = self.store.reachable();
        HealthResponse {
            ok: store_reachable,
            backend: self.store.backend(),
            store_reachable,
            chain_length: self.chain_len(),
        }
    }
}
