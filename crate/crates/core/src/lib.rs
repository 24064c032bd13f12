//! A private proof-of-authority ledger for file metadata.
//!
//! Files live in a content-addressed store; each block records one content
//! identifier and is valid only when both the uploader and the admin have
//! signed its hash. The chain is persisted as an AES-256-GCM sealed snapshot
//! that any device holding the symmetric key can restore and verify.

pub mod crypto;
pub mod chain;
mod fsutil;
pub mod store;
pub mod persistence;
pub mod api;
pub mod gmm;
pub mod bench;
