use ed25519_dalek::{Signer, VerifyingKey};
use serde::{Deserialize, Serialize};

use super::family::{family_commitment, FamilyKeys};
use super::{AccessLevel, KeySsi, KeySsiError};
use crate::crypto::{b64, sha256, unb64};

pub const SIGNATURE_ALGORITHM: &str = "ed25519";

/// Detached signature. Carries the signer's public key so holders of a
/// zero-access identifier, which only commit to the key's hash, can verify.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub algorithm: String,
    /// base64url Ed25519 public key.
    pub public_key: String,
    /// base64url signature bytes.
    pub bytes: String,
    /// base64url family commitment, SHA-256 of the public key.
    pub signer_control: String,
}

/// Signs `payload` with the family key. Requires Owner or Anchor rank.
pub fn sign(ssi: &KeySsi, payload: &[u8]) -> Result<Signature, KeySsiError> {
    ssi.require(AccessLevel::Anchor)?;
    let keys = FamilyKeys::of(ssi)?;
    let public = keys.verifying_key();
    Ok(Signature {
        algorithm: SIGNATURE_ALGORITHM.to_owned(),
        public_key: b64(public.as_bytes()),
        bytes: b64(&keys.signing_key().sign(payload).to_bytes()),
        signer_control: b64(&sha256(public.as_bytes())),
    })
}

/// True iff `sig` is a valid signature over `payload` by the family of `ssi`.
/// Malformed signatures simply fail.
pub fn verify(ssi: &KeySsi, payload: &[u8], sig: &Signature) -> bool {
    let Ok(commitment) = family_commitment(ssi) else {
        return false;
    };
    sig.public_key_bytes().is_some_and(|pk| sha256(&pk) == commitment) && verify_detached(payload, sig)
}

/// Checks `sig` against the public key it carries, without tying that key
/// to any identifier.
pub fn verify_detached(payload: &[u8], sig: &Signature) -> bool {
    if sig.algorithm != SIGNATURE_ALGORITHM {
        return false;
    }
    let Some(public) = sig.public_key_bytes() else {
        return false;
    };
    let Some(bytes) = unb64(&sig.bytes).and_then(|v| <[u8; 64]>::try_from(v).ok()) else {
        return false;
    };
    if sig.signer_control != b64(&sha256(&public)) {
        return false;
    }
    let Ok(key) = VerifyingKey::from_bytes(&public) else {
        return false;
    };
    key.verify_strict(payload, &ed25519_dalek::Signature::from_bytes(&bytes))
        .is_ok()
}

impl Signature {
    pub fn public_key_bytes(&self) -> Option<[u8; 32]> {
        unb64(&self.public_key).and_then(|v| <[u8; 32]>::try_from(v).ok())
    }
}
