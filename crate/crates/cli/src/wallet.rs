//! Local wallet: one KeySSI plus changes staged for the next commit.
//!
//! ```text
//! <home>/<name>/owner.ssi          the KeySSI, in plaintext
//! <home>/<name>/cache/staged.json  ordered staged operations
//! <home>/<name>/cache/blobs/<sha>  staged file contents
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dsukit_core::crypto::sha256;
use dsukit_core::dsu::{DsuError, DsuHandle};
use dsukit_core::keyssi::KeySsi;
use serde::{Deserialize, Serialize};

use crate::CliError;

const OWNER_FILE: &str = "owner.ssi";
const STAGED_FILE: &str = "staged.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Staged {
    Write { path: String, blob: String },
    Delete { path: String },
    Mount { point: String, ssi: String },
}

pub struct Wallet {
    dir: PathBuf,
}

impl Wallet {
    pub fn at(home: &Path, name: &str) -> Result<Wallet, CliError> {
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(CliError::Usage(format!("invalid wallet name {name:?}")));
        }
        Ok(Wallet { dir: home.join(name) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn cache(&self) -> PathBuf {
        self.dir.join("cache")
    }

    fn owner_path(&self) -> PathBuf {
        self.dir.join(OWNER_FILE)
    }

    /// Stores `ssi` as the wallet key. Refuses to replace one unless `force`.
    pub fn store(&self, ssi: &KeySsi, force: bool) -> Result<(), CliError> {
        let path = self.owner_path();
        if path.exists() && !force {
            return Err(CliError::Domain(format!(
                "wallet {} already holds a key; pass --force to replace it",
                self.dir.display()
            )));
        }
        fs::create_dir_all(self.cache().join("blobs")).map_err(io_err(&self.dir))?;
        write_private(&path, format!("{ssi}\n").as_bytes()).map_err(io_err(&path))?;
        self.clear_staged()?;
        eprintln!(
            "warning: the wallet key is stored unencrypted at {}; anyone who can read this file controls the DSU",
            path.display()
        );
        Ok(())
    }

    pub fn ssi(&self) -> Result<KeySsi, CliError> {
        let path = self.owner_path();
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => CliError::Domain(format!(
                "no key in wallet {}; run `dsukit dsu create` or `dsukit dsu attach` first",
                self.dir.display()
            )),
            _ => io_err(&path)(e),
        })?;
        Ok(KeySsi::parse(text.trim())?)
    }

    pub fn staged(&self) -> Result<Vec<Staged>, CliError> {
        let path = self.cache().join(STAGED_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Domain(format!("corrupt {}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn stage(&self, op: Staged) -> Result<(), CliError> {
        let mut ops = self.staged()?;
        ops.push(op);
        let path = self.cache().join(STAGED_FILE);
        fs::create_dir_all(self.cache()).map_err(io_err(&path))?;
        fs::write(&path, serde_json::to_vec_pretty(&ops).expect("staged ops serialize")).map_err(io_err(&path))
    }

    pub fn put_blob(&self, data: &[u8]) -> Result<String, CliError> {
        let name = hex::encode(sha256(data));
        let dir = self.cache().join("blobs");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(&name);
        write_private(&path, data).map_err(io_err(&path))?;
        Ok(name)
    }

    fn blob(&self, name: &str) -> Result<Vec<u8>, CliError> {
        let path = self.cache().join("blobs").join(name);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn clear_staged(&self) -> Result<(), CliError> {
        let cache = self.cache();
        for path in [cache.join(STAGED_FILE), cache.join("blobs")] {
            let result = if path.is_dir() {
                fs::remove_dir_all(&path)
            } else {
                fs::remove_file(&path)
            };
            match result {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Ok(())
    }

    /// Replays staged operations onto `dsu`.
    pub fn apply(&self, dsu: &mut DsuHandle) -> Result<(), CliError> {
        for op in self.staged()? {
            apply_one(self, dsu, &op)?;
        }
        Ok(())
    }
}

pub fn apply_one(wallet: &Wallet, dsu: &mut DsuHandle, op: &Staged) -> Result<(), CliError> {
    let r: Result<(), DsuError> = match op {
        Staged::Write { path, blob } => dsu.write_file(path, &wallet.blob(blob)?),
        Staged::Delete { path } => dsu.delete(path),
        Staged::Mount { point, ssi } => dsu.mount(point, KeySsi::parse(ssi)?),
    };
    Ok(r?)
}

fn write_private(path: &Path, data: &[u8]) -> io::Result<()> {
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    options.open(path)?.write_all(data)
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Domain(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_ops_round_trip_in_order() {
        let home = tempfile::tempdir().unwrap();
        let w = Wallet::at(home.path(), "w").unwrap();
        assert!(w.staged().unwrap().is_empty());
        let blob = w.put_blob(b"hello").unwrap();
        w.stage(Staged::Write { path: "/a".into(), blob: blob.clone() }).unwrap();
        w.stage(Staged::Delete { path: "/b".into() }).unwrap();
        assert_eq!(
            w.staged().unwrap(),
            vec![
                Staged::Write { path: "/a".into(), blob: blob.clone() },
                Staged::Delete { path: "/b".into() }
            ]
        );
        assert_eq!(w.blob(&blob).unwrap(), b"hello");
        w.clear_staged().unwrap();
        assert!(w.staged().unwrap().is_empty());
    }

    #[test]
    fn wallet_names_cannot_escape_home() {
        let home = tempfile::tempdir().unwrap();
        for bad in ["", "..", "a/b", "."] {
            assert!(matches!(Wallet::at(home.path(), bad), Err(CliError::Usage(_))));
        }
    }

    #[test]
    fn missing_key_is_a_domain_error() {
        let home = tempfile::tempdir().unwrap();
        let w = Wallet::at(home.path(), "w").unwrap();
        assert!(matches!(w.ssi(), Err(CliError::Domain(_))));
    }

    #[cfg(unix)]
    #[test]
    fn key_file_is_owner_only() {
        use std::os::unix::fs::PermissionsExt;
        let home = tempfile::tempdir().unwrap();
        let w = Wallet::at(home.path(), "w").unwrap();
        let ssi = dsukit_core::keyssi::seed_ssi_from_entropy("d", &[1; 32]).unwrap();
        w.store(&ssi, false).unwrap();
        let mode = fs::metadata(w.owner_path()).unwrap().permissions().mode();
        assert_eq!(mode & 0o777, 0o600);
        assert_eq!(w.ssi().unwrap(), ssi);
        assert!(w.store(&ssi, false).is_err());
        w.store(&ssi, true).unwrap();
    }
}
