//! TOML configuration. Relative paths resolve against the config file's
//! directory; command-line flags override file values.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use destine_core::crypto::PublicKey;
use destine_core::store::Backend;
use serde::Deserialize;

pub const DEFAULT_IPFS_URL: &str = "http://127.0.0.1:5001";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub key: KeySection,
    #[serde(default)]
    pub uploaders: Vec<String>,
    #[serde(default)]
    pub store: StoreSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySection {
    pub file: Option<PathBuf>,
    pub admin_file: Option<PathBuf>,
    pub uploader_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSection {
    pub backend: Option<String>,
    pub ipfs_url: Option<String>,
    pub root: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub addr: Option<String>,
    pub ttl_ms: Option<u64>,
}

/// Values from the command line that take precedence over the file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Encrypted chain container
    #[arg(long, global = true)]
    pub chain: Option<PathBuf>,
    /// Symmetric key file (64 hex characters)
    #[arg(long, global = true)]
    pub key_file: Option<PathBuf>,
    #[arg(long, global = true)]
    pub admin_key: Option<PathBuf>,
    #[arg(long, global = true)]
    pub uploader_key: Option<PathBuf>,
    /// Content store backend: local or ipfs
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub ipfs_url: Option<String>,
    /// Root directory of the local content store
    #[arg(long, global = true)]
    pub store_root: Option<PathBuf>,
}

/// Fully resolved settings. Paths are optional until a command needs them.
#[derive(Debug, Clone)]
pub struct Settings {
    pub chain_path: Option<PathBuf>,
    pub key_file: Option<PathBuf>,
    pub admin_file: Option<PathBuf>,
    pub uploader_file: Option<PathBuf>,
    pub uploaders: Vec<PublicKey>,
    pub backend: Backend,
    pub ipfs_url: String,
    pub store_root: Option<PathBuf>,
    pub addr: SocketAddr,
    pub ttl_ms: u64,
}

impl Settings {
    pub fn load(config: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let (file, base) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                let parsed: FileConfig =
                    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))?;
                (parsed, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let backend_text = flags.backend.clone().or(file.store.backend).unwrap_or_else(|| "local".into());
        let backend: Backend = backend_text.parse().map_err(|_| anyhow::anyhow!("unknown store backend {backend_text:?}"))?;
        let uploaders = file
            .uploaders
            .iter()
            .map(|hex| PublicKey::from_hex(hex.trim()).with_context(|| format!("invalid uploader key {hex:?}")))
            .collect::<Result<Vec<_>>>()?;
        let addr_text = file.serve.addr.unwrap_or_else(|| DEFAULT_ADDR.into());
        let addr = addr_text.parse().with_context(|| format!("invalid serve.addr {addr_text:?}"))?;
        let ttl_ms = file.serve.ttl_ms.unwrap_or(destine_core::api::ServiceConfig::default().ttl_ms);
        if ttl_ms == 0 {
            bail!("serve.ttl_ms must be positive");
        }

        Ok(Self {
            chain_path: flags.chain.clone().or(rel(file.chain.path)),
            key_file: flags.key_file.clone().or(rel(file.key.file)),
            admin_file: flags.admin_key.clone().or(rel(file.key.admin_file)),
            uploader_file: flags.uploader_key.clone().or(rel(file.key.uploader_file)),
            uploaders,
            backend,
            ipfs_url: flags.ipfs_url.clone().or(file.store.ipfs_url).unwrap_or_else(|| DEFAULT_IPFS_URL.into()),
            store_root: flags.store_root.clone().or(rel(file.store.root)),
            addr,
            ttl_ms,
        })
    }

    pub fn chain_path(&self) -> Result<&Path> {
        self.chain_path.as_deref().context("no chain path configured (set chain.path or --chain)")
    }

    pub fn key_file(&self) -> Result<&Path> {
        self.key_file.as_deref().context("no symmetric key configured (set key.file or --key-file)")
    }

    pub fn admin_file(&self) -> Result<&Path> {
        self.admin_file.as_deref().context("no admin key configured (set key.admin_file or --admin-key)")
    }

    pub fn uploader_file(&self) -> Result<&Path> {
        self.uploader_file.as_deref().context("no uploader key configured (set key.uploader_file or --uploader-key)")
    }

    /// Local store root; defaults to `<chain path>.store`.
    pub fn store_root(&self) -> Result<PathBuf> {
        if let Some(root) = &self.store_root {
            return Ok(root.clone());
        }
        let mut p = self.chain_path()?.as_os_str().to_owned();
        p.push(".store");
        Ok(PathBuf::from(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("destine.toml");
        std::fs::write(
            &cfg,
            "[chain]\npath = \"chain.bin\"\n[key]\nfile = \"/abs/chain.key\"\n[store]\nbackend = \"ipfs\"\n[serve]\nttl_ms = 500\n",
        )
        .unwrap();
        let flags = Overrides { backend: Some("local".into()), ..Default::default() };
        let s = Settings::load(Some(&cfg), &flags).unwrap();
        assert_eq!(s.chain_path.unwrap(), dir.path().join("chain.bin"));
        assert_eq!(s.key_file.unwrap(), PathBuf::from("/abs/chain.key"));
        assert_eq!(s.backend, Backend::Local);
        assert_eq!(s.ttl_ms, 500);
    }

    #[test]
    fn rejects_unknown_keys_and_backends() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "[store]\nbackend = \"s3\"\n").unwrap();
        assert!(Settings::load(Some(&cfg), &Overrides::default()).is_err());
        std::fs::write(&cfg, "[chain]\npth = \"x\"\n").unwrap();
        assert!(Settings::load(Some(&cfg), &Overrides::default()).is_err());
    }

    #[test]
    fn default_store_root_sits_next_to_chain() {
        let flags = Overrides { chain: Some("/data/chain.bin".into()), ..Default::default() };
        let s = Settings::load(None, &flags).unwrap();
        assert_eq!(s.store_root().unwrap(), PathBuf::from("/data/chain.bin.store"));
    }
}
