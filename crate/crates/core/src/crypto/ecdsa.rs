//! ECDSA over NIST P-256.
//!
//! Signing and verification are written against the curve arithmetic of the
//! `p256` crate rather than its high-level `ecdsa` wrappers, so that a fixed
//! nonce can be injected for known-answer tests. The message scalar is
//! `e = int(SHA-256(m)) mod n` where `m` is the 32-byte block hash; the result
//! is therefore interoperable with any ECDSA-P256-SHA256 verifier that is
//! handed the raw hash bytes as the message.

use std::fmt;

use p256::elliptic_curve::ops::{Invert, Reduce};
use p256::elliptic_curve::point::AffineCoordinates;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::elliptic_curve::{Field, Group};
use p256::{AffinePoint, EncodedPoint, FieldBytes, NonZeroScalar, ProjectivePoint, Scalar, U256};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{sha256, CryptoError, Digest};

pub const PUBLIC_KEY_LEN: usize = 65;
pub const SIGNATURE_LEN: usize = 64;
pub const SECRET_KEY_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Uploader,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Admin => "admin",
            Role::Uploader => "uploader",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "admin" => Ok(Role::Admin),
            "uploader" => Ok(Role::Uploader),
            other => Err(CryptoError::UnknownRole(other.to_string())),
        }
    }
}

/// Uncompressed SEC1 point `04 || X || Y`.
///
/// The bytes are kept as received; curve membership is checked when the key
/// is used, so a tampered key surfaces as a verification failure instead of a
/// parse failure.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    /// Parses and validates an uncompressed point.
    pub fn from_sec1_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let key = Self::from_raw(bytes)?;
        key.to_point()?;
        Ok(key)
    }

    /// Accepts any 65 bytes without checking the curve equation.
    pub fn from_raw(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::Length {
            what: "public key",
            expected: PUBLIC_KEY_LEN,
            got: bytes.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Self::from_sec1_bytes(&hex::decode(s.trim())?)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; PUBLIC_KEY_LEN] {
        &mut self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn to_point(self) -> Result<AffinePoint, CryptoError> {
        if self.0[0] != 0x04 {
            return Err(CryptoError::InvalidPublicKey);
        }
        let encoded = EncodedPoint::from_bytes(self.0).map_err(|_| CryptoError::InvalidPublicKey)?;
        Option::from(AffinePoint::from_encoded_point(&encoded)).ok_or(CryptoError::InvalidPublicKey)
    }

    fn from_point(point: &AffinePoint) -> Self {
        let encoded = point.to_encoded_point(false);
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out.copy_from_slice(encoded.as_bytes());
        Self(out)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        PublicKey::from_raw(&bytes).map_err(serde::de::Error::custom)
    }
}

/// Fixed-width big-endian `r || s`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = bytes.try_into().map_err(|_| CryptoError::Length {
            what: "signature",
            expected: SIGNATURE_LEN,
            got: bytes.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(&hex::decode(s.trim())?)
    }

    pub fn from_components(r: [u8; 32], s: [u8; 32]) -> Self {
        let mut out = [0u8; SIGNATURE_LEN];
        out[..32].copy_from_slice(&r);
        out[32..].copy_from_slice(&s);
        Self(out)
    }

    pub fn r(&self) -> [u8; 32] {
        self.0[..32].try_into().expect("fixed width")
    }

    pub fn s(&self) -> [u8; 32] {
        self.0[32..].try_into().expect("fixed width")
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; SIGNATURE_LEN] {
        &mut self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Signature::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// An ECDSA identity. The private scalar has no serde implementation and is
/// only exposed through [`KeyPair::secret_hex`] for key files.
#[derive(Clone)]
pub struct KeyPair {
    role: Role,
    secret: NonZeroScalar,
    public: PublicKey,
}

impl KeyPair {
    /// Draws `d` uniformly from `[1, n-1]` using the OS CSPRNG. Panics if the
    /// OS randomness source fails.
    pub fn generate(role: Role) -> Self {
        Self::from_scalar(role, NonZeroScalar::random(&mut OsRng))
    }

    pub fn from_secret_bytes(role: Role, bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != SECRET_KEY_LEN {
            return Err(CryptoError::Length { what: "private key", expected: SECRET_KEY_LEN, got: bytes.len() });
        }
        let repr: [u8; SECRET_KEY_LEN] = bytes.try_into().expect("length checked");
        let scalar: Option<NonZeroScalar> = NonZeroScalar::from_repr(repr.into()).into();
        scalar.map(|d| Self::from_scalar(role, d)).ok_or(CryptoError::InvalidSecretKey)
    }

    pub fn from_secret_hex(role: Role, s: &str) -> Result<Self, CryptoError> {
        Self::from_secret_bytes(role, &hex::decode(s.trim())?)
    }

    fn from_scalar(role: Role, secret: NonZeroScalar) -> Self {
        let point = (ProjectivePoint::GENERATOR * *secret).to_affine();
        Self { role, secret, public: PublicKey::from_point(&point) }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn secret_hex(&self) -> String {
        hex::encode(self.secret.to_bytes())
    }

    pub fn sign(&self, message_digest: &Digest) -> Signature {
        ecdsa_sign(self, message_digest)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("role", &self.role)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

fn message_scalar(message_digest: &Digest) -> Scalar {
    let e = sha256(message_digest.as_bytes());
    <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*e.as_bytes()))
}

/// Signs with a random per-signature nonce, retrying on `r = 0` or `s = 0`.
pub fn ecdsa_sign(key: &KeyPair, message_digest: &Digest) -> Signature {
    loop {
        let nonce = NonZeroScalar::random(&mut OsRng);
        if let Some(sig) = sign_with_scalar(key, message_digest, &nonce) {
            return sig;
        }
    }
}

/// Signs with a caller-chosen big-endian nonce `k` in `[1, n-1]`. Returns
/// `Ok(None)` when the nonce yields `r = 0` or `s = 0`. Reusing a nonce across
/// two messages leaks the private key; this exists for known-answer testing.
pub fn sign_with_nonce(key: &KeyPair, message_digest: &Digest, nonce: &[u8; 32]) -> Result<Option<Signature>, CryptoError> {
    let k = scalar_in_range(nonce).ok_or(CryptoError::InvalidNonce)?;
    Ok(sign_with_scalar(key, message_digest, &k))
}

fn sign_with_scalar(key: &KeyPair, message_digest: &Digest, nonce: &NonZeroScalar) -> Option<Signature> {
    let e = message_scalar(message_digest);
    let big_r = (ProjectivePoint::GENERATOR * **nonce).to_affine();
    let r = <Scalar as Reduce<U256>>::reduce_bytes(&big_r.x());
    if bool::from(r.is_zero()) {
        return None;
    }
    let k_inv = Invert::invert(nonce);
    let s = *k_inv * (e + r * *key.secret);
    if bool::from(s.is_zero()) {
        return None;
    }
    let mut r_bytes = [0u8; 32];
    let mut s_bytes = [0u8; 32];
    r_bytes.copy_from_slice(&r.to_bytes());
    s_bytes.copy_from_slice(&s.to_bytes());
    Some(Signature::from_components(r_bytes, s_bytes))
}

/// Returns `Ok(false)` for any malformed or non-matching signature and
/// `Err(InvalidPublicKey)` only when `public` is not a point on the curve.
pub fn ecdsa_verify(public: &PublicKey, message_digest: &Digest, sig: &Signature) -> Result<bool, CryptoError> {
    let q = public.to_point()?;
    let Some(r) = scalar_in_range(&sig.r()) else { return Ok(false) };
    let Some(s) = scalar_in_range(&sig.s()) else { return Ok(false) };

    let e = message_scalar(message_digest);
    let w = Invert::invert(&s);
    let u1 = e * *w;
    let u2 = *r * *w;
    let x = ProjectivePoint::GENERATOR * u1 + ProjectivePoint::from(q) * u2;
    if bool::from(x.is_identity()) {
        return Ok(false);
    }
    let x_mod_n = <Scalar as Reduce<U256>>::reduce_bytes(&x.to_affine().x());
    Ok(x_mod_n == *r)
}

fn scalar_in_range(bytes: &[u8; 32]) -> Option<NonZeroScalar> {
    NonZeroScalar::from_repr(FieldBytes::from(*bytes)).into()
}
