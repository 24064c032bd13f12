use std::fs::{File, OpenOptions, TryLockError};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use destine_core::api::{self, PersistTarget, Service, ServiceConfig, ServiceError};
use destine_core::bench::{self, BenchConfig, SizeLabel};
use destine_core::chain::{Chain, UploaderRegistry};
use destine_core::crypto::{KeyPair, Role, SymmetricKey};
use destine_core::gmm;
use destine_core::persistence::{self, PersistError};
use destine_core::store::{Backend, ContentId, ContentStore, IpfsStore, LocalStore, StoreError};

use crate::config::Settings;
use crate::keys;
use crate::{Cli, Command, KeyRole};

/// 1 for verification and authentication failures anywhere in the chain of
/// causes, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let verification = err.chain().any(|cause| {
        if let Some(e) = cause.downcast_ref::<PersistError>() {
            return matches!(
                e,
                PersistError::Authentication
                    | PersistError::Format(_)
                    | PersistError::Corrupt(_)
                    | PersistError::Integrity(_)
                    | PersistError::InvalidChain(_)
            );
        }
        if let Some(e) = cause.downcast_ref::<ServiceError>() {
            return matches!(
                e,
                ServiceError::Unauthorized | ServiceError::BadSignature(_) | ServiceError::Integrity { .. }
            );
        }
        matches!(cause.downcast_ref::<StoreError>(), Some(StoreError::Integrity { .. }))
    });
    if verification {
        1
    } else {
        2
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Keygen { role, symmetric, out, force } => keygen(role, symmetric, &out, force),
        Command::Init { force } => init(&settings, force),
        Command::Upload { file } => upload(&settings, &file),
        Command::Get { cid, index, out } => get(&settings, cid, index, &out),
        Command::Verify => verify(&settings),
        Command::Serve { addr } => serve(settings, addr),
        Command::Bench { sizes, iters, out, ipfs, seed } => {
            let mut settings = settings;
            if ipfs {
                settings.backend = Backend::Ipfs;
            }
            run_bench(&settings, &sizes, iters, &out, seed)
        }
        Command::Analyze { input, max_k, seed, out } => analyze(&input, max_k, seed, &out),
    }
}

fn keygen(role: Option<KeyRole>, symmetric: bool, out: &Path, force: bool) -> Result<()> {
    if symmetric {
        keys::write_symmetric(&SymmetricKey::generate(), out, force)?;
        println!("wrote symmetric key {}", out.display());
        return Ok(());
    }
    let role = match role.context("--role is required")? {
        KeyRole::Admin => Role::Admin,
        KeyRole::Uploader => Role::Uploader,
    };
    let key = KeyPair::generate(role);
    let public = keys::write_keypair(&key, out, force)?;
    println!("wrote {role} key {} and {}", out.display(), public.display());
    println!("{}", key.public_key().to_hex());
    Ok(())
}

/// Advisory exclusive lock on `<chain>.lock`, held until the file is dropped.
fn lock_chain(chain: &Path) -> Result<File> {
    let mut name = chain.as_os_str().to_owned();
    name.push(".lock");
    let lock_path = PathBuf::from(name);
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .with_context(|| format!("cannot open lock file {}", lock_path.display()))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(TryLockError::WouldBlock) => {
            bail!("chain {} is in use by another process (lock {})", chain.display(), lock_path.display())
        }
        Err(TryLockError::Error(e)) => Err(e).context("cannot lock chain"),
    }
}

fn open_store(settings: &Settings) -> Result<Arc<dyn ContentStore>> {
    Ok(match settings.backend {
        Backend::Local => Arc::new(LocalStore::open(settings.store_root()?)?),
        Backend::Ipfs => Arc::new(IpfsStore::new(settings.ipfs_url.clone())?),
    })
}

fn load(settings: &Settings) -> Result<(Chain, SymmetricKey)> {
    let key = keys::read_symmetric(settings.key_file()?)?;
    let path = settings.chain_path()?;
    if !path.exists() {
        bail!("chain file {} does not exist (run init first)", path.display());
    }
    let chain = persistence::load_chain(path, &key)?;
    Ok((chain, key))
}

/// Configured uploaders plus the uploader that co-signed genesis.
fn registry(settings: &Settings, chain: &Chain) -> UploaderRegistry {
    let mut registry = UploaderRegistry::new(settings.uploaders.iter().copied());
    if let Some(genesis) = chain.blocks().first() {
        registry.insert(genesis.uploader_pub);
    }
    registry
}

fn service(settings: &Settings) -> Result<Service> {
    let (chain, key) = load(settings)?;
    let admin = keys::read_keypair(settings.admin_file()?, Role::Admin)?;
    let registry = registry(settings, &chain);
    let persist = Some(PersistTarget { path: settings.chain_path()?.to_path_buf(), key });
    let config = ServiceConfig { ttl_ms: settings.ttl_ms, ..ServiceConfig::default() };
    Ok(Service::new(chain, open_store(settings)?, admin, registry, persist, config)?)
}

fn init(settings: &Settings, force: bool) -> Result<()> {
    let path = settings.chain_path()?;
    let key = keys::read_symmetric(settings.key_file()?)?;
    let admin = keys::read_keypair(settings.admin_file()?, Role::Admin)?;
    let uploader = keys::read_keypair(settings.uploader_file()?, Role::Uploader)?;
    let _lock = lock_chain(path)?;
    if path.exists() && !force {
        bail!("chain file {} already exists (use --force to replace it)", path.display());
    }
    let chain = Chain::genesis(&admin, &uploader, api::now_ms());
    persistence::save_chain(&chain, &key, path)?;
    if settings.backend == Backend::Local {
        LocalStore::open(settings.store_root()?)?;
    }
    println!("{}", serde_json::to_string_pretty(&chain.blocks()[0])?);
    Ok(())
}

fn upload(settings: &Settings, file: &Path) -> Result<()> {
    let content = std::fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
    let uploader = keys::read_keypair(settings.uploader_file()?, Role::Uploader)?;
    let _lock = lock_chain(settings.chain_path()?)?;
    let service = service(settings)?;
    let block = service.upload_with(&uploader, &content)?;
    println!("{}", serde_json::to_string_pretty(&block)?);
    Ok(())
}

fn get(settings: &Settings, cid: Option<String>, index: Option<u64>, out: &Path) -> Result<()> {
    let (chain, _) = load(settings)?;
    let cid = match (cid, index) {
        (_, Some(i)) => {
            let block = chain.get(i).ok_or_else(|| anyhow!("no block with index {i} (chain has {})", chain.len()))?;
            block.cid.clone().ok_or_else(|| anyhow!("genesis has no content"))?
        }
        (Some(text), None) => {
            let cid = ContentId::new(text)?;
            if !chain.blocks().iter().any(|b| b.cid.as_ref() == Some(&cid)) {
                bail!("content id {cid} is not recorded on the chain");
            }
            cid
        }
        (None, None) => bail!("either --cid or --index is required"),
    };
    let bytes = open_store(settings)?.get(&cid)?;
    std::fs::write(out, &bytes).with_context(|| format!("cannot write {}", out.display()))?;
    eprintln!("wrote {} bytes of {cid} to {}", bytes.len(), out.display());
    Ok(())
}

fn verify(settings: &Settings) -> Result<()> {
    let (chain, _) = load(settings)?;
    let tip = chain.tip().expect("loaded chains are non-empty");
    println!("ok: {} blocks, tip {}", chain.len(), tip.hash);
    Ok(())
}

fn serve(settings: Settings, addr: Option<std::net::SocketAddr>) -> Result<()> {
    let addr = addr.unwrap_or(settings.addr);
    let _lock = lock_chain(settings.chain_path()?)?;
    // built before the runtime: the IPFS client is blocking
    let service = Arc::new(service(&settings)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, blocks = service.chain_len(), "serving");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        api::http::serve(service, listener, shutdown).await?;
        Ok(())
    })
}

fn run_bench(settings: &Settings, sizes: &str, iters: usize, out: &Path, seed: u64) -> Result<()> {
    let sizes = SizeLabel::parse_list(sizes)?;
    if sizes.is_empty() {
        bail!("--sizes lists no sizes");
    }
    let uploader = keys::read_keypair(settings.uploader_file()?, Role::Uploader)?;
    let _lock = lock_chain(settings.chain_path()?)?;
    let service = service(settings)?;
    let file = File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    let config = BenchConfig { sizes, iters, seed };
    let report = bench::run_benchmark(&service, &uploader, &config, BufWriter::new(file))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn analyze(input: &Path, max_k: usize, seed: u64, out: &Path) -> Result<()> {
    if max_k == 0 {
        bail!("--max-k must be at least 1");
    }
    let summary = gmm::summarize_csv(input, max_k, seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    summary.write_table_csv(File::create(out.join("summary.csv"))?)?;
    summary.write_markdown(File::create(out.join("summary.md"))?)?;
    summary.write_density_csv(BufWriter::new(File::create(out.join("density.csv"))?))?;
    summary.write_markdown(std::io::stdout().lock())?;
    for (group, n) in &summary.skipped {
        eprintln!("skipped {group}: {n} samples");
    }
    Ok(())
}
