use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use destine_core::crypto::{KeyPair, Role, SymmetricKey};

/// Writes `contents` to a new owner-only file. Refuses to replace an existing
/// file unless `force`.
fn write_private(path: &Path, contents: &str, force: bool) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut file = opts.open(path).with_context(|| format!("cannot create {}", path.display()))?;
    #[cfg(unix)]
    {
        // create(true) keeps the mode of a file that already existed
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(std::fs::Permissions::from_mode(0o600))?;
    }
    writeln!(file, "{contents}")?;
    file.sync_all()?;
    Ok(())
}

pub fn pub_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".pub");
    PathBuf::from(p)
}

/// Writes the private scalar to `path` and the public point to `<path>.pub`.
pub fn write_keypair(key: &KeyPair, path: &Path, force: bool) -> Result<PathBuf> {
    let public = pub_path(path);
    if !force && public.exists() {
        bail!("{} already exists (use --force to replace)", public.display());
    }
    write_private(path, &key.secret_hex(), force)?;
    std::fs::write(&public, format!("{}\n", key.public_key().to_hex()))
        .with_context(|| format!("cannot write {}", public.display()))?;
    Ok(public)
}

pub fn write_symmetric(key: &SymmetricKey, path: &Path, force: bool) -> Result<()> {
    write_private(path, &key.to_hex(), force)
}

/// Warns when a private key file is readable by group or others.
pub fn check_permissions(path: &Path) {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        if let Ok(meta) = std::fs::metadata(path) {
            let mode = meta.permissions().mode() & 0o777;
            if mode & 0o077 != 0 {
                tracing::warn!(path = %path.display(), mode = format!("{mode:o}"), "private key file is accessible by other users; chmod 600 recommended");
            }
        }
    }
}

pub fn read_keypair(path: &Path, role: Role) -> Result<KeyPair> {
    check_permissions(path);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {role} key {}", path.display()))?;
    KeyPair::from_secret_hex(role, text.trim()).with_context(|| format!("invalid {role} key in {}", path.display()))
}

pub fn read_symmetric(path: &Path) -> Result<SymmetricKey> {
    check_permissions(path);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read key file {}", path.display()))?;
    SymmetricKey::from_hex(&text).with_context(|| format!("invalid symmetric key in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypair_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("admin.key");
        let key = KeyPair::generate(Role::Admin);
        let public = write_keypair(&key, &path, false).unwrap();
        assert_eq!(read_keypair(&path, Role::Admin).unwrap().public_key(), key.public_key());
        let pub_text = std::fs::read_to_string(public).unwrap();
        assert_eq!(pub_text.trim(), key.public_key().to_hex());
        assert!(write_keypair(&key, &path, false).is_err());
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(std::fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o600);
        }
    }
}
