//! SHA-256, ECDSA P-256 and AES-256-GCM.

mod aead;
mod digest;
mod ecdsa;

pub use aead::{aead_decrypt, aead_encrypt, seal_with_iv, AeadSealed, SymmetricKey, IV_LEN, KEY_LEN, TAG_LEN};
pub use digest::{sha256, Digest, DIGEST_LEN};
pub use ecdsa::{
    ecdsa_sign, ecdsa_verify, sign_with_nonce, KeyPair, PublicKey, Role, Signature, PUBLIC_KEY_LEN,
    SECRET_KEY_LEN, SIGNATURE_LEN,
};

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid {what} length: expected {expected}, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("invalid hex: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error("public key is not a valid P-256 point")]
    InvalidPublicKey,
    #[error("private key is not a scalar in [1, n-1]")]
    InvalidSecretKey,
    #[error("nonce is not a scalar in [1, n-1]")]
    InvalidNonce,
    #[error("unknown role {0:?} (expected admin or uploader)")]
    UnknownRole(String),
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("sealed data truncated: need at least {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
}
