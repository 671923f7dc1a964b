//! Content-addressed storage of opaque encrypted bricks.
//!
//! Bricks are keyed by the SHA-256 of their ciphertext. Stores never see
//! key material; encryption happens before a brick reaches them.

mod fs;
mod memory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use fs::FsBrickStore;
pub use memory::MemoryBrickStore;

use crate::crypto::sha256;

/// Largest accepted brick, in bytes.
pub const MAX_BRICK_SIZE: usize = 1024 * 1024;

#[derive(Debug, Error)]
pub enum BrickError {
    #[error("brick payload is empty")]
    Empty,
    #[error("brick of {0} bytes exceeds the {MAX_BRICK_SIZE} byte limit")]
    TooLarge(usize),
    #[error("malformed brick hash {0:?}")]
    MalformedHash(String),
    #[error("brick {0} not found")]
    NotFound(BrickHash),
    #[error("brick {0} is corrupted: content does not match its hash")]
    Corrupted(BrickHash),
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("brick store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("brick store unavailable: {0}")]
    Unavailable(String),
}

/// SHA-256 digest of a brick's ciphertext; hex in text form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BrickHash([u8; 32]);

impl BrickHash {
    pub fn of(data: &[u8]) -> BrickHash {
        BrickHash(sha256(data))
    }

    pub fn from_bytes(bytes: [u8; 32]) -> BrickHash {
        BrickHash(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Accepts exactly 64 lowercase hex characters.
    pub fn parse(text: &str) -> Result<BrickHash, BrickError> {
        let malformed = || BrickError::MalformedHash(text.to_owned());
        if text.len() != 64 || !text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(malformed());
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(text, &mut out).map_err(|_| malformed())?;
        Ok(BrickHash(out))
    }
}

impl fmt::Display for BrickHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for BrickHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BrickHash({})", &self.to_hex()[..12])
    }
}

impl FromStr for BrickHash {
    type Err = BrickError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BrickHash::parse(s)
    }
}

impl Serialize for BrickHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BrickHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        BrickHash::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// True iff `data` hashes to `hash`.
pub fn verify_brick(hash: &BrickHash, data: &[u8]) -> bool {
    BrickHash::of(data) == *hash
}

/// A place bricks can be stored in and fetched from.
///
/// `put` is idempotent and bricks are immutable: there is no update or delete.
pub trait BrickStore: Send + Sync {
    fn put_brick(&self, domain: &str, ciphertext: &[u8]) -> Result<BrickHash, BrickError>;

    /// Returns the brick, verified against `hash`.
    fn get_brick(&self, domain: &str, hash: &BrickHash) -> Result<Vec<u8>, BrickError>;
}

pub(crate) fn check_domain(domain: &str) -> Result<(), BrickError> {
    crate::keyssi::validate_domain(domain).map_err(|e| BrickError::Domain(e.to_string()))
}

pub(crate) fn check_put(domain: &str, ciphertext: &[u8]) -> Result<(), BrickError> {
    check_domain(domain)?;
    if ciphertext.is_empty() {
        return Err(BrickError::Empty);
    }
    if ciphertext.len() > MAX_BRICK_SIZE {
        return Err(BrickError::TooLarge(ciphertext.len()));
    }
    Ok(())
}
