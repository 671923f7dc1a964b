//! Brick maps and the sealed envelope they are stored in.
//!
//! The envelope brick is canonical JSON holding base64url sections, each
//! sealed under a different key:
//!
//! ```text
//! main    read key            the full BrickMap
//! public  public-section key  /public entries, Secret family only
//! ```
//!
//! For the Secret family the `/secret` entries live in a section sealed under
//! the secret-folder key and nested inside the main map, so they are
//! encrypted twice.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::DsuError;
use crate::anchoring::HashLink;
use crate::brickstore::BrickHash;
use crate::crypto::{b64, open, seal, unb64, SymmetricKey, KEY_LEN};
use crate::keyssi::{KeySsi, Signature};

const ENVELOPE_VERSION: u32 = 0;

/// One encrypted chunk of a file and the key that opens it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrickRef {
    pub hash: BrickHash,
    #[serde(with = "key_b64")]
    pub key: SymmetricKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub size: u64,
    pub bricks: Vec<BrickRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountEntry {
    pub path: String,
    pub ssi: KeySsi,
}

/// Immutable manifest of one DSU version. Lists every file, not a delta.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrickMap {
    pub entries: Vec<FileEntry>,
    pub mounts: Vec<MountEntry>,
    pub previous: Option<HashLink>,
    pub created_at: u64,
    /// Sealed [`SectionMap`] of `/secret` entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<String>,
    /// Signature by the writer over the map with this field unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modifier: Option<Signature>,
}

impl BrickMap {
    /// Bytes the modifier signs.
    pub fn modifier_payload(&self) -> Vec<u8> {
        let mut unsigned = self.clone();
        unsigned.modifier = None;
        canonical_json(&unsigned)
    }
}

/// Entries visible through a restricted key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionMap {
    pub entries: Vec<FileEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    v: u32,
    main: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    public: Option<String>,
}

/// Serializes with object keys sorted at every level so equal values
/// always give equal bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    fn sort(value: Value) -> Value {
        match value {
            Value::Object(map) => {
                let mut fields: Vec<(String, Value)> = map.into_iter().map(|(k, v)| (k, sort(v))).collect();
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                Value::Object(fields.into_iter().collect())
            }
            Value::Array(items) => Value::Array(items.into_iter().map(sort).collect()),
            other => other,
        }
    }
    let value = serde_json::to_value(value).expect("brick map types always serialize");
    serde_json::to_vec(&sort(value)).expect("a json value always serializes")
}

pub fn seal_section<T: Serialize>(key: &SymmetricKey, value: &T) -> String {
    b64(&seal(key, &canonical_json(value)))
}

/// Opens a sealed section. A wrong key is `AccessDenied`, a section that
/// opens but does not parse is `Corrupt`.
pub fn open_section<T: for<'de> Deserialize<'de>>(key: &SymmetricKey, sealed: &str) -> Result<T, DsuError> {
    let bytes = unb64(sealed).ok_or_else(|| DsuError::Corrupt("section is not base64url".into()))?;
    let plain = open(key, &bytes)
        .ok_or_else(|| DsuError::AccessDenied("the key does not open this DSU".into()))?;
    serde_json::from_slice(&plain).map_err(|e| DsuError::Corrupt(format!("brick map: {e}")))
}

pub struct SealedMap {
    pub main: String,
    pub public: Option<String>,
}

pub fn encode_envelope(sealed: SealedMap) -> Vec<u8> {
    canonical_json(&Envelope {
        v: ENVELOPE_VERSION,
        main: sealed.main,
        public: sealed.public,
    })
}

pub fn decode_envelope(bytes: &[u8]) -> Result<SealedMap, DsuError> {
    let envelope: Envelope =
        serde_json::from_slice(bytes).map_err(|e| DsuError::Corrupt(format!("envelope: {e}")))?;
    if envelope.v != ENVELOPE_VERSION {
        return Err(DsuError::Corrupt(format!("unknown envelope version {}", envelope.v)));
    }
    Ok(SealedMap {
        main: envelope.main,
        public: envelope.public,
    })
}

mod key_b64 {
    use super::*;

    pub fn serialize<S: Serializer>(key: &SymmetricKey, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&b64(key))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<SymmetricKey, D::Error> {
        let text = String::deserialize(deserializer)?;
        unb64(&text)
            .and_then(|v| <[u8; KEY_LEN]>::try_from(v).ok())
            .ok_or_else(|| serde::de::Error::custom("brick key must be 32 bytes of base64url"))
    }
}
