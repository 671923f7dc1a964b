//! SecretDSU: a Secret-family DSU with a standard folder layout.
//!
//! ```text
//! /code/type          "SecretDSU"
//! /control/whitelist  public keys allowed to commit, one per line
//! /public/key         the family's signing public key
//! /private/           readable at Read rank
//! /secret/anchor.ssi  sealed a second time, Anchor rank and above
//! /credentials        mounted from a credential KeySSI
//! ```

use std::sync::Arc;

use super::handle::{create_dsu, DsuHandle};
use super::{DsuError, ServiceLocator};
use crate::crypto::b64;
use crate::keyssi::{derive, AccessLevel, Family, FamilyKeys, KeySsi, KeySsiError};

pub const SECRET_DSU_TYPE: &str = "SecretDSU";
pub const WHITELIST_PATH: &str = "/control/whitelist";

/// Creates a SecretDSU handle with the standard folders staged. The caller
/// commits it. The family's own key starts out as the only whitelisted
/// modifier.
pub fn create_secret_dsu(
    env: &Arc<dyn ServiceLocator>,
    secret: &KeySsi,
    credential_ssi: &KeySsi,
) -> Result<DsuHandle, DsuError> {
    if secret.family() != Some(Family::Secret) {
        return Err(DsuError::Key(KeySsiError::NotInFamily(secret.ssi_type())));
    }
    if secret.access_level() != Some(AccessLevel::Owner) {
        return Err(DsuError::Privilege {
            op: "create",
            required: AccessLevel::Owner,
            actual: secret.access_level().unwrap_or(AccessLevel::ZeroAccess),
        });
    }
    let own_key = b64(FamilyKeys::of(secret)?.verifying_key().as_bytes());
    let mut dsu = create_dsu(env, secret)?;
    dsu.write_file("/code/type", SECRET_DSU_TYPE.as_bytes())?;
    dsu.write_file(WHITELIST_PATH, format!("{own_key}\n").as_bytes())?;
    dsu.write_file("/public/key", own_key.as_bytes())?;
    dsu.write_file("/private/.keep", b"")?;
    dsu.write_file("/secret/anchor.ssi", derive(secret)?.serialize().as_bytes())?;
    dsu.mount("/credentials", credential_ssi.clone())?;
    Ok(dsu)
}

pub(super) fn parse_whitelist(data: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(data)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}
