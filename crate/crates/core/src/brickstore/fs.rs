use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{check_domain, check_put, verify_brick, BrickError, BrickHash, BrickStore};

/// Bricks as files under `<root>/<domain>/<first two hex chars>/<hash>`.
///
/// Writes go through a temporary file and an atomic rename, so concurrent
/// writers of the same brick never expose a partial file.
pub struct FsBrickStore {
    root: PathBuf,
}

impl FsBrickStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<FsBrickStore, BrickError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(FsBrickStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn brick_path(&self, domain: &str, hash: &BrickHash) -> PathBuf {
        let hex = hash.to_hex();
        self.root.join(domain).join(&hex[..2]).join(hex)
    }
}

impl BrickStore for FsBrickStore {
    fn put_brick(&self, domain: &str, ciphertext: &[u8]) -> Result<BrickHash, BrickError> {
        check_put(domain, ciphertext)?;
        let hash = BrickHash::of(ciphertext);
        let path = self.brick_path(domain, &hash);
        if path.exists() {
            return Ok(hash);
        }
        let dir = path.parent().expect("brick path has a parent");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile_in(dir)?;
        tmp.1.write_all(ciphertext)?;
        tmp.1.sync_all()?;
        fs::rename(&tmp.0, &path)?;
        Ok(hash)
    }

    fn get_brick(&self, domain: &str, hash: &BrickHash) -> Result<Vec<u8>, BrickError> {
        check_domain(domain)?;
        let path = self.brick_path(domain, hash);
        let data = match fs::read(&path) {
            Ok(data) => data,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(BrickError::NotFound(*hash))
            }
            Err(e) => return Err(e.into()),
        };
        if !verify_brick(hash, &data) {
            return Err(BrickError::Corrupted(*hash));
        }
        Ok(data)
    }
}

fn tempfile_in(dir: &Path) -> io::Result<(PathBuf, fs::File)> {
    loop {
        let name = format!(".tmp-{:016x}", rand::random::<u64>());
        let path = dir.join(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => return Ok((path, file)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
}
