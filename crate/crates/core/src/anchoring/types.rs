use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AnchorError;
use crate::brickstore::BrickHash;
use crate::keyssi::{self, AccessLevel, KeySsi, KeySsiError, Signature, SsiType};

/// Written in place of the previous link when signing the first version.
pub const EMPTY_SENTINEL: &str = "-";

const PAYLOAD_TAG: &str = "dsu-anchor-v0";

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// The zero-access identifier of a DSU family, without hint.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AnchorId(KeySsi);

impl AnchorId {
    /// Accepts only zero-access identifiers.
    pub fn new(ssi: KeySsi) -> Result<AnchorId, AnchorError> {
        if ssi.access_level() != Some(AccessLevel::ZeroAccess) {
            return Err(AnchorError::Validation(format!(
                "anchor ids must be zero-access identifiers, got {}",
                ssi.ssi_type()
            )));
        }
        keyssi::family_commitment(&ssi).map_err(|e| AnchorError::Validation(e.to_string()))?;
        Ok(AnchorId(ssi.with_hint(None).expect("removing a hint cannot fail")))
    }

    /// The anchor of whatever family `ssi` belongs to.
    pub fn for_family(ssi: &KeySsi) -> Result<AnchorId, KeySsiError> {
        Ok(AnchorId(keyssi::zero_access_of(ssi)?))
    }

    pub fn parse(text: &str) -> Result<AnchorId, AnchorError> {
        let ssi = KeySsi::parse(text).map_err(|e| AnchorError::Validation(e.to_string()))?;
        AnchorId::new(ssi)
    }

    pub fn as_ssi(&self) -> &KeySsi {
        &self.0
    }

    pub fn domain(&self) -> &str {
        self.0.domain()
    }
}

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnchorId({})", self.0)
    }
}

impl FromStr for AnchorId {
    type Err = AnchorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnchorId::parse(s)
    }
}

/// A `hashlink` identifier whose type-specific field is a brick-map hash.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HashLink(KeySsi);

impl HashLink {
    pub fn new(domain: &str, brick_map: &BrickHash) -> Result<HashLink, KeySsiError> {
        Ok(HashLink(KeySsi::hashlink(domain, &brick_map.to_hex())?))
    }

    pub fn parse(text: &str) -> Result<HashLink, AnchorError> {
        let bad = |reason: String| AnchorError::Validation(format!("invalid hash link: {reason}"));
        let ssi = KeySsi::parse(text).map_err(|e| bad(e.to_string()))?;
        if ssi.ssi_type() != SsiType::HashLink {
            return Err(bad(format!("type {} is not hashlink", ssi.ssi_type())));
        }
        BrickHash::parse(ssi.type_specific()).map_err(|e| bad(e.to_string()))?;
        if !ssi.control().is_empty() || ssi.hint().is_some() {
            return Err(bad("unexpected control or hint".into()));
        }
        Ok(HashLink(ssi))
    }

    pub fn brick_hash(&self) -> BrickHash {
        BrickHash::parse(self.0.type_specific()).expect("validated on construction")
    }

    pub fn domain(&self) -> &str {
        self.0.domain()
    }

    pub fn as_ssi(&self) -> &KeySsi {
        &self.0
    }
}

impl fmt::Display for HashLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for HashLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashLink({})", &self.0.type_specific()[..12])
    }
}

impl FromStr for HashLink {
    type Err = AnchorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HashLink::parse(s)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.0.serialize())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                <$ty>::parse(&text).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(AnchorId);
string_serde!(HashLink);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    /// Acknowledge after local signature and nonce checks, confirm later.
    Optimistic,
    /// Acknowledge only once the ledger has confirmed the append.
    #[default]
    Validated,
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimistic" => Ok(ExecutionMode::Optimistic),
            "validated" => Ok(ExecutionMode::Validated),
            other => Err(format!("unknown execution mode {other:?}")),
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Optimistic => "optimistic",
            ExecutionMode::Validated => "validated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryStatus {
    PendingOptimistic,
    Confirmed,
    Invalidated,
}

/// One light-anchor history element as stored on the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorEntry {
    pub link: HashLink,
    pub signature: Signature,
}

/// A history element as seen by a node, with its status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub link: HashLink,
    pub signature: Signature,
    pub status: EntryStatus,
    /// Wall-clock milliseconds, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl VersionEntry {
    pub fn entry(&self) -> AnchorEntry {
        AnchorEntry {
            link: self.link.clone(),
            signature: self.signature.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub anchor_id: AnchorId,
    pub history: Vec<VersionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendRequest {
    pub anchor_id: AnchorId,
    pub new_link: HashLink,
    pub expected_last: Option<HashLink>,
    pub signature: Signature,
    pub mode: ExecutionMode,
}

impl AppendRequest {
    /// Builds and signs a request with an Owner or Anchor rank identifier.
    pub fn signed(
        signer: &KeySsi,
        anchor_id: AnchorId,
        new_link: HashLink,
        expected_last: Option<HashLink>,
        mode: ExecutionMode,
    ) -> Result<AppendRequest, KeySsiError> {
        let payload = signing_payload(&anchor_id, &new_link, expected_last.as_ref());
        Ok(AppendRequest {
            signature: keyssi::sign(signer, &payload)?,
            anchor_id,
            new_link,
            expected_last,
            mode,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendReceipt {
    pub accepted_at: u64,
    pub status: EntryStatus,
}

/// Bytes covered by an append signature: the anchor, the new link and the
/// previous link, which doubles as the nonce.
pub fn signing_payload(
    anchor_id: &AnchorId,
    new_link: &HashLink,
    expected_last: Option<&HashLink>,
) -> Vec<u8> {
    let previous = expected_last.map_or_else(|| EMPTY_SENTINEL.to_owned(), |l| l.to_string());
    format!("{PAYLOAD_TAG}\n{anchor_id}\n{new_link}\n{previous}").into_bytes()
}

pub fn verify_append(
    anchor_id: &AnchorId,
    new_link: &HashLink,
    expected_last: Option<&HashLink>,
    signature: &Signature,
) -> bool {
    new_link.domain() == anchor_id.domain()
        && keyssi::verify(
            anchor_id.as_ssi(),
            &signing_payload(anchor_id, new_link, expected_last),
            signature,
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub first_bad_index: Option<usize>,
}

/// Checks every non-invalidated entry's signature against its predecessor.
///
/// Any strict prefix of a valid history is valid; altering an element
/// breaks validation at or after it.
pub fn validate_history(record: &AnchorRecord) -> ValidationReport {
    let mut previous: Option<&HashLink> = None;
    for (index, entry) in record.history.iter().enumerate() {
        if entry.status == EntryStatus::Invalidated {
            continue;
        }
        if !verify_append(&record.anchor_id, &entry.link, previous, &entry.signature) {
            return ValidationReport {
                valid: false,
                first_bad_index: Some(index),
            };
        }
        previous = Some(&entry.link);
    }
    ValidationReport {
        valid: true,
        first_bad_index: None,
    }
}
