//! Hash-chained blocks with dual uploader/admin signatures.
//!
//! A block hash is SHA-256 over the UTF-8 string
//! `index|timestamp_ms|prev_hash_hex|cid`, with the genesis block leaving the
//! last two fields empty. Both signatures are over that hash.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{ecdsa_verify, sha256, CryptoError, Digest, KeyPair, PublicKey, Role, Signature};
use crate::store::ContentId;

/// Field order is lexicographic so that serde emits canonical JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    #[serde(with = "empty_as_none")]
    pub cid: Option<ContentId>,
    pub hash: Digest,
    pub index: u64,
    pub owner_pub: PublicKey,
    #[serde(with = "empty_as_none")]
    pub prev_hash: Option<Digest>,
    pub sig_admin: Signature,
    pub sig_uploader: Signature,
    pub timestamp_ms: u64,
    pub uploader_pub: PublicKey,
}

impl Block {
    pub fn is_genesis(&self) -> bool {
        self.index == 0
    }

    pub fn computed_hash(&self) -> Digest {
        sha256(&hash_preimage(self.index, self.timestamp_ms, self.prev_hash.as_ref(), self.cid.as_ref()))
    }

    /// Both signatures verify against the stored keys and the stored hash.
    pub fn signatures_valid(&self) -> Result<(), FailureReason> {
        check_signature(&self.uploader_pub, &self.hash, &self.sig_uploader, Role::Uploader)?;
        check_signature(&self.owner_pub, &self.hash, &self.sig_admin, Role::Admin)
    }
}

fn check_signature(key: &PublicKey, hash: &Digest, sig: &Signature, role: Role) -> Result<(), FailureReason> {
    match ecdsa_verify(key, hash, sig) {
        Ok(true) => Ok(()),
        Ok(false) => Err(FailureReason::BadSignature(role)),
        Err(_) => Err(FailureReason::InvalidKey(role)),
    }
}

/// `decimal(index) | decimal(timestamp_ms) | hex(prev_hash) | cid`, UTF-8.
pub fn hash_preimage(index: u64, timestamp_ms: u64, prev_hash: Option<&Digest>, cid: Option<&ContentId>) -> Vec<u8> {
    let prev = prev_hash.map(Digest::to_hex).unwrap_or_default();
    let cid = cid.map(ContentId::as_str).unwrap_or_default();
    format!("{index}|{timestamp_ms}|{prev}|{cid}").into_bytes()
}

/// An unsigned block header over the current tip.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: u64,
    pub timestamp_ms: u64,
    pub prev_hash: Digest,
    pub cid: ContentId,
    pub hash: Digest,
}

impl Candidate {
    pub fn new(index: u64, timestamp_ms: u64, prev_hash: Digest, cid: ContentId) -> Self {
        let hash = sha256(&hash_preimage(index, timestamp_ms, Some(&prev_hash), Some(&cid)));
        Self { index, timestamp_ms, prev_hash, cid, hash }
    }
}

/// Builds and signs block 0 with both roles.
pub fn create_genesis(admin: &KeyPair, uploader: &KeyPair, timestamp_ms: u64) -> Block {
    let hash = sha256(&hash_preimage(0, timestamp_ms, None, None));
    Block {
        cid: None,
        hash,
        index: 0,
        owner_pub: admin.public_key(),
        prev_hash: None,
        sig_admin: admin.sign(&hash),
        sig_uploader: uploader.sign(&hash),
        timestamp_ms,
        uploader_pub: uploader.public_key(),
    }
}

/// Public keys the admin will co-sign for.
#[derive(Clone, Debug, Default)]
pub struct UploaderRegistry {
    keys: HashSet<PublicKey>,
}

impl UploaderRegistry {
    pub fn new(keys: impl IntoIterator<Item = PublicKey>) -> Self {
        Self { keys: keys.into_iter().collect() }
    }

    pub fn is_authorized(&self, key: &PublicKey) -> bool {
        self.keys.contains(key)
    }

    pub fn insert(&mut self, key: PublicKey) {
        self.keys.insert(key);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "role", rename_all = "snake_case")]
pub enum FailureReason {
    EmptyChain,
    IndexMismatch,
    /// Genesis must have empty `prev_hash` and `cid`; every other block must have both.
    GenesisShape,
    HashMismatch,
    BrokenLink,
    /// The block names a different admin than genesis.
    AdminMismatch,
    BadSignature(Role),
    InvalidKey(Role),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::EmptyChain => f.write_str("chain has no genesis block"),
            FailureReason::IndexMismatch => f.write_str("index does not match position"),
            FailureReason::GenesisShape => f.write_str("prev_hash/cid emptiness does not match genesis rule"),
            FailureReason::HashMismatch => f.write_str("stored hash does not match recomputed hash"),
            FailureReason::BrokenLink => f.write_str("prev_hash does not match previous block hash"),
            FailureReason::AdminMismatch => f.write_str("owner key differs from the genesis admin"),
            FailureReason::BadSignature(role) => write!(f, "{role} signature does not verify"),
            FailureReason::InvalidKey(role) => write!(f, "{role} public key is not a valid curve point"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyFailure {
    pub index: usize,
    pub reason: FailureReason,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {}: {}", self.index, self.reason)
    }
}

/// Checks every block invariant and link, stopping at the first failure.
pub fn verify_chain(blocks: &[Block]) -> Result<(), VerifyFailure> {
    verify_range(blocks, true)
}

/// Same as [`verify_chain`] without the signature checks.
pub fn verify_links(blocks: &[Block]) -> Result<(), VerifyFailure> {
    verify_range(blocks, false)
}

fn verify_range(blocks: &[Block], signatures: bool) -> Result<(), VerifyFailure> {
    let genesis = blocks.first().ok_or(VerifyFailure { index: 0, reason: FailureReason::EmptyChain })?;
    for (i, block) in blocks.iter().enumerate() {
        let fail = |reason| VerifyFailure { index: i, reason };
        if block.index != i as u64 {
            return Err(fail(FailureReason::IndexMismatch));
        }
        let genesis_shaped = block.prev_hash.is_none() && block.cid.is_none();
        let content_shaped = block.prev_hash.is_some() && block.cid.is_some();
        if (i == 0 && !genesis_shaped) || (i > 0 && !content_shaped) {
            return Err(fail(FailureReason::GenesisShape));
        }
        if block.computed_hash() != block.hash {
            return Err(fail(FailureReason::HashMismatch));
        }
        if i > 0 && block.prev_hash != Some(blocks[i - 1].hash) {
            return Err(fail(FailureReason::BrokenLink));
        }
        if block.owner_pub != genesis.owner_pub {
            return Err(fail(FailureReason::AdminMismatch));
        }
        if signatures {
            block.signatures_valid().map_err(fail)?;
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("chain is not initialized (no genesis block)")]
    NotInitialized,
    #[error("chain already has a genesis block")]
    AlreadyInitialized,
    #[error("candidate is stale: built on {candidate} but the tip is {tip}")]
    StaleTip { candidate: Digest, tip: Digest },
    #[error("candidate index {got} does not follow the tip (expected {expected})")]
    IndexGap { expected: u64, got: u64 },
    #[error("candidate hash does not match its header")]
    CandidateHash,
    #[error("{0} signature rejected")]
    Signature(Role),
    #[error("{0} key is not authorized for this chain")]
    Unauthorized(Role),
    #[error("invalid {role} key: {source}")]
    Key { role: Role, source: CryptoError },
    #[error("chain failed verification at {0}")]
    Invalid(VerifyFailure),
}

/// An ordered, fully verified sequence of blocks.
///
/// Blocks are only added through [`Chain::append_block`], so a `Chain` value
/// always satisfies [`verify_chain`] unless it is empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    /// A chain with no genesis yet; every operation except [`Chain::init`] fails on it.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn genesis(admin: &KeyPair, uploader: &KeyPair, timestamp_ms: u64) -> Self {
        Self { blocks: vec![create_genesis(admin, uploader, timestamp_ms)] }
    }

    pub fn init(&mut self, genesis: Block) -> Result<(), ChainError> {
        if !self.blocks.is_empty() {
            return Err(ChainError::AlreadyInitialized);
        }
        verify_chain(std::slice::from_ref(&genesis)).map_err(ChainError::Invalid)?;
        self.blocks.push(genesis);
        Ok(())
    }

    /// Accepts `blocks` only if the whole sequence verifies.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, VerifyFailure> {
        verify_chain(&blocks)?;
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn get(&self, index: u64) -> Option<&Block> {
        usize::try_from(index).ok().and_then(|i| self.blocks.get(i))
    }

    pub fn admin_key(&self) -> Option<PublicKey> {
        self.blocks.first().map(|b| b.owner_pub)
    }

    pub fn verify(&self) -> Result<(), VerifyFailure> {
        verify_chain(&self.blocks)
    }

    pub fn build_candidate(&self, cid: ContentId, timestamp_ms: u64) -> Result<Candidate, ChainError> {
        let tip = self.tip().ok_or(ChainError::NotInitialized)?;
        Ok(Candidate::new(self.blocks.len() as u64, timestamp_ms, tip.hash, cid))
    }

    /// Appends `candidate` iff it extends the current tip, the uploader is
    /// authorized, the owner is the genesis admin, and both signatures verify.
    /// On any error the chain is left untouched.
    pub fn append_block(
        &mut self,
        candidate: &Candidate,
        sig_uploader: &Signature,
        sig_admin: &Signature,
        uploader_pub: &PublicKey,
        owner_pub: &PublicKey,
        uploaders: &UploaderRegistry,
    ) -> Result<&Block, ChainError> {
        let tip = self.tip().ok_or(ChainError::NotInitialized)?;
        if candidate.prev_hash != tip.hash {
            return Err(ChainError::StaleTip { candidate: candidate.prev_hash, tip: tip.hash });
        }
        let expected = self.blocks.len() as u64;
        if candidate.index != expected {
            return Err(ChainError::IndexGap { expected, got: candidate.index });
        }
        let recomputed = Candidate::new(candidate.index, candidate.timestamp_ms, candidate.prev_hash, candidate.cid.clone());
        if recomputed.hash != candidate.hash {
            return Err(ChainError::CandidateHash);
        }
        if !uploaders.is_authorized(uploader_pub) {
            return Err(ChainError::Unauthorized(Role::Uploader));
        }
        if Some(*owner_pub) != self.admin_key() {
            return Err(ChainError::Unauthorized(Role::Admin));
        }
        verify_role(uploader_pub, &candidate.hash, sig_uploader, Role::Uploader)?;
        verify_role(owner_pub, &candidate.hash, sig_admin, Role::Admin)?;

        self.blocks.push(Block {
            cid: Some(candidate.cid.clone()),
            hash: candidate.hash,
            index: candidate.index,
            owner_pub: *owner_pub,
            prev_hash: Some(candidate.prev_hash),
            sig_admin: *sig_admin,
            sig_uploader: *sig_uploader,
            timestamp_ms: candidate.timestamp_ms,
            uploader_pub: *uploader_pub,
        });
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Drops blocks past `len`. Used to undo an append whose persistence failed.
    pub(crate) fn truncate(&mut self, len: usize) {
        self.blocks.truncate(len.max(1));
    }

    /// Serializes as canonical JSON `{"blocks":[...]}` with sorted keys and
    /// no insignificant whitespace.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("chain serialization is infallible")
    }
}

fn verify_role(key: &PublicKey, hash: &Digest, sig: &Signature, role: Role) -> Result<(), ChainError> {
    match ecdsa_verify(key, hash, sig) {
        Ok(true) => Ok(()),
        Ok(false) => Err(ChainError::Signature(role)),
        Err(source) => Err(ChainError::Key { role, source }),
    }
}

/// Wire shape of a chain, used for parsing before verification.
#[derive(Debug, Deserialize)]
pub struct ChainJson {
    pub blocks: Vec<Block>,
}

mod empty_as_none {
    use std::str::FromStr;

    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(value: &Option<T>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serializer.collect_str(v),
            None => serializer.serialize_str(""),
        }
    }

    pub fn deserialize<'de, T, D>(deserializer: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: fmt::Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(deserializer)?;
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(serde::de::Error::custom)
        }
    }
}
