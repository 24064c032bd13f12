//! Two-phase upload service: the uploader prepares and signs, the admin
//! verifies, co-signs and appends.

pub mod http;
mod service;

pub use service::{
    now_ms, Clock, CommitRequest, CommitResponse, HealthResponse, PendingUpload, PersistTarget, PrepareResponse,
    Service, ServiceConfig, ServiceError, VerifyResponse,
};
