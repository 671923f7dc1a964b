//! constSSI: a memorable name resolving to an immutable DSU that holds a
//! strong KeySSI.
//!
//! The DSU's seed is derived from the name alone, so any resolver can find
//! it. Anyone can therefore also append to its anchor; resolution only ever
//! reads the first anchored version, which is what makes it immutable.

use std::sync::Arc;

use super::handle::{create_dsu, history, load_dsu, DsuHandle};
use super::{DsuError, ServiceLocator};
use crate::anchoring::{ExecutionMode, HashLink};
use crate::crypto::sha256_parts;
use crate::keyssi::{derive, seed_ssi_from_entropy, KeySsi, KeySsiError, SsiField, SsiType};

const CONST_FILE: &str = "/ssi";

/// The seed of the DSU behind `const_ssi`.
pub fn const_seed(const_ssi: &KeySsi) -> Result<KeySsi, DsuError> {
    if const_ssi.ssi_type() != SsiType::Const {
        return Err(DsuError::Key(KeySsiError::Parse {
            field: SsiField::Type,
            reason: format!("expected a const identifier, got {}", const_ssi.ssi_type()),
        }));
    }
    let canonical = const_ssi.clone().with_hint(None)?.serialize();
    let entropy = sha256_parts(&[b"const-dsu:", canonical.as_bytes()]);
    Ok(seed_ssi_from_entropy(const_ssi.domain(), &entropy)?)
}

/// Binds `const_ssi` to `strong` once and for all.
pub fn publish_const(
    env: &Arc<dyn ServiceLocator>,
    const_ssi: &KeySsi,
    strong: &KeySsi,
) -> Result<HashLink, DsuError> {
    let seed = const_seed(const_ssi)?;
    let immutable = || DsuError::Immutable(const_ssi.to_string());
    let mut dsu = match create_dsu(env, &seed) {
        Ok(dsu) => dsu,
        // An anchor without versions is a publish that died half way.
        Err(DsuError::AlreadyExists(_)) if history(env, &seed, true)?.is_empty() => {
            DsuHandle::empty(env, &seed)?
        }
        Err(DsuError::AlreadyExists(_)) => return Err(immutable()),
        Err(e) => return Err(e),
    };
    dsu.write_file(CONST_FILE, strong.serialize().as_bytes())?;
    dsu.commit(ExecutionMode::Validated).map_err(|e| match e {
        DsuError::CommitConflict(_) => immutable(),
        other => other,
    })
}

/// The strong KeySSI published under `const_ssi`.
pub fn resolve_const(env: &Arc<dyn ServiceLocator>, const_ssi: &KeySsi) -> Result<KeySsi, DsuError> {
    let read = derive(&const_seed(const_ssi)?)?;
    let not_found = || DsuError::NotFound(const_ssi.to_string());
    let versions = match history(env, &read, false) {
        Ok(v) => v,
        Err(DsuError::Anchor(crate::anchoring::AnchorError::NotFound(_))) => return Err(not_found()),
        Err(e) => return Err(e),
    };
    let first = versions.first().ok_or_else(not_found)?;
    let dsu = load_dsu(env, &read, Some(&first.link))?;
    let text = String::from_utf8(dsu.read_file(CONST_FILE)?)
        .map_err(|_| DsuError::Corrupt("const DSU holds a non UTF-8 identifier".into()))?;
    Ok(KeySsi::parse(&text)?)
}
