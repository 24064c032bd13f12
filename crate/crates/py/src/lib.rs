//! Python bindings: keys, chain construction and verification, the local
//! content store, encrypted persistence and mixture-model fitting.

use std::path::PathBuf;

use destine_core::chain::{self, Candidate, Chain, ChainError, UploaderRegistry, VerifyFailure};
use destine_core::crypto::{self, CryptoError, Digest, PublicKey, Role, Signature};
use destine_core::gmm::{self, GmmError};
use destine_core::persistence::{self, PersistError};
use destine_core::store::{ContentId, ContentStore, StoreError};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

create_exception!(destine_block, DestineError, PyException, "Base class for all errors raised by this module.");
create_exception!(destine_block, AuthenticationError, DestineError, "Container did not authenticate: wrong key or tampered file.");
create_exception!(destine_block, VerificationError, DestineError, "A chain invariant or signature check failed.");

fn crypto_err(e: CryptoError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn chain_err(e: ChainError) -> PyErr {
    VerificationError::new_err(e.to_string())
}

fn verify_err(e: VerifyFailure) -> PyErr {
    VerificationError::new_err(e.to_string())
}

fn store_err(e: StoreError) -> PyErr {
    match e {
        StoreError::Integrity { .. } => VerificationError::new_err(e.to_string()),
        other => DestineError::new_err(other.to_string()),
    }
}

fn persist_err(e: PersistError) -> PyErr {
    match e {
        PersistError::Authentication | PersistError::Format(_) => AuthenticationError::new_err(e.to_string()),
        PersistError::Integrity(_) | PersistError::InvalidChain(_) | PersistError::Corrupt(_) => {
            VerificationError::new_err(e.to_string())
        }
        other => DestineError::new_err(other.to_string()),
    }
}

fn gmm_err(e: GmmError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value into plain Python objects via JSON.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DestineError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn role(name: &str) -> PyResult<Role> {
    name.parse().map_err(crypto_err)
}

fn digest(hex: &str) -> PyResult<Digest> {
    Digest::from_hex(hex).map_err(crypto_err)
}

/// Hex SHA-256 of `data`.
#[pyfunction]
fn sha256(data: &[u8]) -> String {
    crypto::sha256(data).to_hex()
}

/// Checks a hex signature over a hex 32-byte digest.
#[pyfunction]
fn verify_signature(public_key: &str, digest_hex: &str, signature: &str) -> PyResult<bool> {
    let key = PublicKey::from_hex(public_key).map_err(crypto_err)?;
    let sig = Signature::from_hex(signature).map_err(crypto_err)?;
    crypto::ecdsa_verify(&key, &digest(digest_hex)?, &sig).map_err(crypto_err)
}

#[pyclass(name = "KeyPair", module = "destine_block", frozen)]
struct PyKeyPair(crypto::KeyPair);

#[pymethods]
impl PyKeyPair {
    #[staticmethod]
    fn generate(role_name: &str) -> PyResult<Self> {
        Ok(Self(crypto::KeyPair::generate(role(role_name)?)))
    }

    #[staticmethod]
    fn from_secret_hex(role_name: &str, secret: &str) -> PyResult<Self> {
        crypto::KeyPair::from_secret_hex(role(role_name)?, secret).map(Self).map_err(crypto_err)
    }

    #[getter]
    fn role(&self) -> String {
        self.0.role().to_string()
    }

    #[getter]
    fn public_key(&self) -> String {
        self.0.public_key().to_hex()
    }

    fn secret_hex(&self) -> String {
        self.0.secret_hex()
    }

    /// Signs a hex 32-byte digest, returning hex `r || s`.
    fn sign(&self, digest_hex: &str) -> PyResult<String> {
        Ok(self.0.sign(&digest(digest_hex)?).to_hex())
    }

    fn __repr__(&self) -> String {
        format!("KeyPair(role={:?}, public_key={:?})", self.0.role().to_string(), self.0.public_key().to_hex())
    }
}

#[pyclass(name = "SymmetricKey", module = "destine_block", frozen)]
struct PySymmetricKey(crypto::SymmetricKey);

#[pymethods]
impl PySymmetricKey {
    #[staticmethod]
    fn generate() -> Self {
        Self(crypto::SymmetricKey::generate())
    }

    #[staticmethod]
    fn from_hex(text: &str) -> PyResult<Self> {
        crypto::SymmetricKey::from_hex(text).map(Self).map_err(crypto_err)
    }

    fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    fn __repr__(&self) -> &'static str {
        "SymmetricKey(<hidden>)"
    }
}

#[pyclass(name = "LocalStore", module = "destine_block", frozen)]
struct PyLocalStore(destine_core::store::LocalStore);

#[pymethods]
impl PyLocalStore {
    #[new]
    fn new(root: PathBuf) -> PyResult<Self> {
        destine_core::store::LocalStore::open(root).map(Self).map_err(store_err)
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.0.root().to_path_buf()
    }

    fn put(&self, content: &[u8]) -> PyResult<String> {
        Ok(self.0.put(content).map_err(store_err)?.to_string())
    }

    fn get<'py>(&self, py: Python<'py>, cid: &str) -> PyResult<Bound<'py, PyBytes>> {
        let id = ContentId::new(cid).map_err(store_err)?;
        let bytes = self.0.get(&id).map_err(store_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn has(&self, cid: &str) -> PyResult<bool> {
        let id = ContentId::new(cid).map_err(store_err)?;
        self.0.has(&id).map_err(store_err)
    }
}

/// Unsigned header over the current tip. `hash` is what both parties sign.
#[pyclass(name = "Candidate", module = "destine_block", frozen)]
struct PyCandidate(Candidate);

#[pymethods]
impl PyCandidate {
    #[getter]
    fn index(&self) -> u64 {
        self.0.index
    }

    #[getter]
    fn timestamp_ms(&self) -> u64 {
        self.0.timestamp_ms
    }

    #[getter]
    fn prev_hash(&self) -> String {
        self.0.prev_hash.to_hex()
    }

    #[getter]
    fn cid(&self) -> String {
        self.0.cid.to_string()
    }

    #[getter]
    fn hash(&self) -> String {
        self.0.hash.to_hex()
    }
}

#[pyclass(name = "Chain", module = "destine_block")]
struct PyChain(Chain);

#[pymethods]
impl PyChain {
    /// New chain holding only a genesis block co-signed by both keys.
    #[staticmethod]
    #[pyo3(signature = (admin, uploader, timestamp_ms=None))]
    fn genesis(admin: &PyKeyPair, uploader: &PyKeyPair, timestamp_ms: Option<u64>) -> Self {
        Self(Chain::genesis(&admin.0, &uploader.0, timestamp_ms.unwrap_or_else(destine_core::api::now_ms)))
    }

    /// Parses canonical JSON and fully verifies it.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let parsed: chain::ChainJson =
            serde_json::from_str(text).map_err(|e| VerificationError::new_err(e.to_string()))?;
        Chain::from_blocks(parsed.blocks).map(Self).map_err(verify_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn tip_hash(&self) -> Option<String> {
        self.0.tip().map(|b| b.hash.to_hex())
    }

    #[getter]
    fn admin_key(&self) -> Option<String> {
        self.0.admin_key().map(|k| k.to_hex())
    }

    fn block<'py>(&self, py: Python<'py>, index: u64) -> PyResult<Bound<'py, PyAny>> {
        let block = self.0.get(index).ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(index))?;
        to_py(py, block)
    }

    fn blocks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.blocks())
    }

    /// Raises VerificationError describing the first failing block.
    fn verify(&self) -> PyResult<()> {
        self.0.verify().map_err(verify_err)
    }

    fn to_json(&self) -> String {
        String::from_utf8(self.0.to_canonical_json()).expect("serde_json emits UTF-8")
    }

    #[pyo3(signature = (cid, timestamp_ms=None))]
    fn build_candidate(&self, cid: &str, timestamp_ms: Option<u64>) -> PyResult<PyCandidate> {
        let cid = ContentId::new(cid).map_err(store_err)?;
        let ts = timestamp_ms.unwrap_or_else(destine_core::api::now_ms);
        self.0.build_candidate(cid, ts).map(PyCandidate).map_err(chain_err)
    }

    /// Appends a candidate given both hex signatures over its hash. The chain
    /// is unchanged on failure.
    fn append<'py>(
        &mut self,
        py: Python<'py>,
        candidate: &PyCandidate,
        sig_uploader: &str,
        sig_admin: &str,
        uploader_pub: &str,
        owner_pub: &str,
        uploaders: Vec<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let keys = uploaders
            .iter()
            .map(|k| PublicKey::from_hex(k).map_err(crypto_err))
            .collect::<PyResult<Vec<_>>>()?;
        let block = self
            .0
            .append_block(
                &candidate.0,
                &Signature::from_hex(sig_uploader).map_err(crypto_err)?,
                &Signature::from_hex(sig_admin).map_err(crypto_err)?,
                &PublicKey::from_hex(uploader_pub).map_err(crypto_err)?,
                &PublicKey::from_hex(owner_pub).map_err(crypto_err)?,
                &UploaderRegistry::new(keys),
            )
            .map_err(chain_err)?;
        to_py(py, block)
    }

    /// Stores `content`, co-signs a block for it and appends it.
    #[pyo3(signature = (store, admin, uploader, content, timestamp_ms=None))]
    fn upload<'py>(
        &mut self,
        py: Python<'py>,
        store: &PyLocalStore,
        admin: &PyKeyPair,
        uploader: &PyKeyPair,
        content: &[u8],
        timestamp_ms: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cid = store.0.put(content).map_err(store_err)?;
        let ts = timestamp_ms.unwrap_or_else(destine_core::api::now_ms);
        let candidate = self.0.build_candidate(cid, ts).map_err(chain_err)?;
        let registry = UploaderRegistry::new([uploader.0.public_key()]);
        let block = self
            .0
            .append_block(
                &candidate,
                &uploader.0.sign(&candidate.hash),
                &admin.0.sign(&candidate.hash),
                &uploader.0.public_key(),
                &admin.0.public_key(),
                &registry,
            )
            .map_err(chain_err)?;
        to_py(py, block)
    }
}

/// Encrypts the chain into the container format and writes it atomically.
#[pyfunction]
fn save_chain(chain: &PyChain, key: &PySymmetricKey, path: PathBuf) -> PyResult<()> {
    persistence::save_chain(&chain.0, &key.0, &path).map_err(persist_err)
}

/// Decrypts, parses and verifies a container.
#[pyfunction]
fn load_chain(path: PathBuf, key: &PySymmetricKey) -> PyResult<PyChain> {
    persistence::load_chain(&path, &key.0).map(PyChain).map_err(persist_err)
}

#[pyfunction]
fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    gmm::bic(log_likelihood, k, n)
}

/// Best of the seeded EM restarts for a fixed `k`, as a dict.
#[pyfunction]
#[pyo3(signature = (samples, k, seed=0))]
fn fit_em<'py>(py: Python<'py>, samples: Vec<f64>, k: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let fit = py.detach(|| gmm::fit_em(&samples, k, seed)).map_err(gmm_err)?;
    to_py(py, &fit)
}

/// Lowest-BIC fit over `k = 1..=k_max`, as a dict.
#[pyfunction]
#[pyo3(signature = (samples, k_max=gmm::DEFAULT_MAX_K, seed=0))]
fn select_model<'py>(py: Python<'py>, samples: Vec<f64>, k_max: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let fit = py.detach(|| gmm::select_model(&samples, k_max, seed)).map_err(gmm_err)?;
    to_py(py, &fit)
}

#[pymodule]
fn destine_block(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("DestineError", py.get_type::<DestineError>())?;
    m.add("AuthenticationError", py.get_type::<AuthenticationError>())?;
    m.add("VerificationError", py.get_type::<VerificationError>())?;
    m.add_class::<PyKeyPair>()?;
    m.add_class::<PySymmetricKey>()?;
    m.add_class::<PyLocalStore>()?;
    m.add_class::<PyCandidate>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(sha256, m)?)?;
    m.add_function(wrap_pyfunction!(verify_signature, m)?)?;
    m.add_function(wrap_pyfunction!(save_chain, m)?)?;
    m.add_function(wrap_pyfunction!(load_chain, m)?)?;
    m.add_function(wrap_pyfunction!(bic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_em, m)?)?;
    m.add_function(wrap_pyfunction!(select_model, m)?)?;
    Ok(())
}
