#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use destine_core::api::{Clock, PersistTarget, Service, ServiceConfig};
use destine_core::chain::{Candidate, Chain, UploaderRegistry};
use destine_core::crypto::{KeyPair, Role, SymmetricKey};
use destine_core::persistence::save_chain;
use destine_core::store::LocalStore;
use tempfile::TempDir;

pub const T0: u64 = 1_700_000_000_000;

pub struct Fixture {
    pub dir: TempDir,
    pub admin: KeyPair,
    pub uploader: KeyPair,
    pub key: SymmetricKey,
    pub chain_path: PathBuf,
    pub service: Arc<Service>,
}

/// Service over a fresh local store, persisting to `chain.bin` in a temp dir.
pub fn fixture() -> Fixture {
    fixture_with(ServiceConfig::default(), None)
}

pub fn fixture_with(config: ServiceConfig, clock: Option<Clock>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let admin = KeyPair::generate(Role::Admin);
    let uploader = KeyPair::generate(Role::Uploader);
    let key = SymmetricKey::generate();
    let chain_path = dir.path().join("chain.bin");
    let chain = Chain::genesis(&admin, &uploader, T0);
    save_chain(&chain, &key, &chain_path).unwrap();
    let store = Arc::new(LocalStore::open(dir.path().join("cas")).unwrap());
    let registry = UploaderRegistry::new([uploader.public_key()]);
    let persist = Some(PersistTarget { path: chain_path.clone(), key: key.clone() });
    let mut service = Service::new(chain, store, admin.clone(), registry, persist, config).unwrap();
    if let Some(clock) = clock {
        service = service.with_clock(clock);
    }
    Fixture { dir, admin, uploader, key, chain_path, service: Arc::new(service) }
}

/// Builds an `n`-block chain (genesis included) directly, without a store.
pub fn build_chain(n: usize) -> (Chain, KeyPair, KeyPair) {
    let admin = KeyPair::generate(Role::Admin);
    let uploader = KeyPair::generate(Role::Uploader);
    let registry = UploaderRegistry::new([uploader.public_key()]);
    let mut chain = Chain::genesis(&admin, &uploader, T0);
    for i in 1..n {
        let cid = LocalStore::id_for(format!("file {i}").as_bytes());
        let cand = chain.build_candidate(cid, T0 + i as u64).unwrap();
        append(&mut chain, &cand, &admin, &uploader, &registry);
    }
    (chain, admin, uploader)
}

pub fn append(chain: &mut Chain, cand: &Candidate, admin: &KeyPair, uploader: &KeyPair, registry: &UploaderRegistry) {
    let su = uploader.sign(&cand.hash);
    let sa = admin.sign(&cand.hash);
    chain.append_block(cand, &su, &sa, &uploader.public_key(), &admin.public_key(), registry).unwrap();
}

/// Every single-field mutation of `b`, labelled by field. Keys are swapped for
/// other valid curve points as well as bit-flipped.
pub fn field_mutations(b: &destine_core::chain::Block) -> Vec<(&'static str, destine_core::chain::Block)> {
    use destine_core::crypto::{sha256, Digest};
    use destine_core::store::ContentId;

    let flip = |d: &Digest| {
        let mut bytes = *d.as_bytes();
        bytes[31] ^= 1;
        Digest::from_bytes(bytes)
    };
    let other_key = KeyPair::generate(Role::Uploader).public_key();
    let mut out = Vec::new();
    let mut push = |name, f: &dyn Fn(&mut destine_core::chain::Block)| {
        let mut m = b.clone();
        f(&mut m);
        out.push((name, m));
    };
    push("cid", &|m| {
        m.cid = Some(ContentId::new(format!("sha256:{}", sha256(m.hash.as_bytes()).to_hex())).unwrap())
    });
    push("hash", &|m| m.hash = flip(&m.hash));
    push("index", &|m| m.index += 1);
    push("owner_pub", &|m| m.owner_pub = other_key);
    push("owner_pub_bits", &|m| m.owner_pub.as_bytes_mut()[64] ^= 1);
    push("prev_hash", &|m| m.prev_hash = Some(m.prev_hash.map(|p| flip(&p)).unwrap_or(m.hash)));
    push("sig_admin", &|m| m.sig_admin.as_bytes_mut()[63] ^= 1);
    push("sig_uploader", &|m| m.sig_uploader.as_bytes_mut()[0] ^= 0x80);
    push("timestamp_ms", &|m| m.timestamp_ms += 1);
    push("uploader_pub", &|m| m.uploader_pub = other_key);
    push("uploader_pub_bits", &|m| m.uploader_pub.as_bytes_mut()[1] ^= 1);
    out
}

/// Serves `service` on an ephemeral port from a background runtime thread.
/// Returns the base URL; the server lives until the process exits.
pub fn spawn_server(service: Arc<Service>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            destine_core::api::http::serve(service, listener, std::future::pending()).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}
