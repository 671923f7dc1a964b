//! KeySSI identifiers.
//!
//! A KeySSI is both an identifier and key material. The text form is
//!
//! ```text
//! ssi:<type>:<domain>:<type-specific>:<control>[:<version>[:<hint>]]
//! ```
//!
//! e.g. `ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY`. Identifiers come in
//! families whose members are obtained from one another by one-way
//! [`derive`] steps, each step strictly lowering the [`AccessLevel`].

mod family;
mod grammar;
mod sign;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use family::{
    create_const_ssi, derive, encryption_key, generate_secret_ssi, generate_seed_ssi,
    secret_ssi_from_entropy, seed_ssi_from_entropy, FamilyKeys, ENTROPY_LEN,
};
pub use grammar::validate_domain;
pub use sign::{sign, verify, verify_detached, Signature, SIGNATURE_ALGORITHM};

pub(crate) use family::{ecies_public_key, ecies_secret, family_commitment, public_section_key};
pub(crate) use family::{secret_folder_key, zero_access_of};

/// Schema tag carried by every identifier.
pub const SCHEMA: &str = "ssi";
/// Version emitted when none was given.
pub const DEFAULT_VERSION: &str = "v0";

/// The type token, second field of an identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SsiType {
    Seed,
    SRead,
    SZa,
    Secret,
    Anchor,
    Read,
    Public,
    Za,
    Const,
    Enc,
    HashLink,
}

impl SsiType {
    pub const ALL: [SsiType; 11] = [
        SsiType::Seed,
        SsiType::SRead,
        SsiType::SZa,
        SsiType::Secret,
        SsiType::Anchor,
        SsiType::Read,
        SsiType::Public,
        SsiType::Za,
        SsiType::Const,
        SsiType::Enc,
        SsiType::HashLink,
    ];

    pub fn token(self) -> &'static str {
        match self {
            SsiType::Seed => "seed",
            SsiType::SRead => "sread",
            SsiType::SZa => "sza",
            SsiType::Secret => "secret",
            SsiType::Anchor => "anchor",
            SsiType::Read => "read",
            SsiType::Public => "public",
            SsiType::Za => "za",
            SsiType::Const => "const",
            SsiType::Enc => "enc",
            SsiType::HashLink => "hashlink",
        }
    }

    pub fn from_token(token: &str) -> Option<SsiType> {
        SsiType::ALL.into_iter().find(|t| t.token() == token)
    }

    pub fn family(self) -> Option<Family> {
        match self {
            SsiType::Seed | SsiType::SRead | SsiType::SZa => Some(Family::Seed),
            SsiType::Secret | SsiType::Anchor | SsiType::Read | SsiType::Public | SsiType::Za => {
                Some(Family::Secret)
            }
            SsiType::Const | SsiType::Enc | SsiType::HashLink => None,
        }
    }

    pub fn access_level(self) -> Option<AccessLevel> {
        match self {
            SsiType::Seed | SsiType::Secret => Some(AccessLevel::Owner),
            SsiType::Anchor => Some(AccessLevel::Anchor),
            SsiType::SRead | SsiType::Read => Some(AccessLevel::Read),
            SsiType::Public => Some(AccessLevel::Public),
            SsiType::SZa | SsiType::Za => Some(AccessLevel::ZeroAccess),
            SsiType::Const | SsiType::Enc | SsiType::HashLink => None,
        }
    }

    /// Next type down the derivation chain, `None` at the bottom or outside a family.
    pub fn lower(self) -> Option<SsiType> {
        match self {
            SsiType::Seed => Some(SsiType::SRead),
            SsiType::SRead => Some(SsiType::SZa),
            SsiType::Secret => Some(SsiType::Anchor),
            SsiType::Anchor => Some(SsiType::Read),
            SsiType::Read => Some(SsiType::Public),
            SsiType::Public => Some(SsiType::Za),
            _ => None,
        }
    }
}

impl fmt::Display for SsiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// seed > sread > sza
    Seed,
    /// secret > anchor > read > public > za
    Secret,
}

impl Family {
    pub fn owner_type(self) -> SsiType {
        match self {
            Family::Seed => SsiType::Seed,
            Family::Secret => SsiType::Secret,
        }
    }

    /// Types of this family, highest rank first.
    pub fn chain(self) -> &'static [SsiType] {
        match self {
            Family::Seed => &[SsiType::Seed, SsiType::SRead, SsiType::SZa],
            Family::Secret => &[
                SsiType::Secret,
                SsiType::Anchor,
                SsiType::Read,
                SsiType::Public,
                SsiType::Za,
            ],
        }
    }
}

/// Rank of an identifier inside its family. Ordered: `ZeroAccess` is lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessLevel {
    ZeroAccess,
    Public,
    Read,
    Anchor,
    Owner,
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AccessLevel::ZeroAccess => "zero-access",
            AccessLevel::Public => "public",
            AccessLevel::Read => "read",
            AccessLevel::Anchor => "anchor",
            AccessLevel::Owner => "owner",
        };
        f.write_str(name)
    }
}

/// Field of the text form, used to locate parse errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsiField {
    Count,
    Schema,
    Type,
    Domain,
    TypeSpecific,
    Control,
    Version,
    Hint,
}

impl fmt::Display for SsiField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SsiField::Count => "field count",
            SsiField::Schema => "schema",
            SsiField::Type => "type",
            SsiField::Domain => "domain",
            SsiField::TypeSpecific => "type-specific",
            SsiField::Control => "control",
            SsiField::Version => "version",
            SsiField::Hint => "hint",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeySsiError {
    #[error("invalid keyssi {field}: {reason}")]
    Parse { field: SsiField, reason: String },
    #[error("{0} is a terminal rank, nothing can be derived from it")]
    NoLowerLevel(SsiType),
    #[error("operation requires {required} rank, identifier has {actual}")]
    InsufficientPrivilege {
        required: AccessLevel,
        actual: String,
    },
    #[error("{0} identifiers carry no family key material")]
    NotInFamily(SsiType),
    #[error("malformed key material in {0}")]
    MalformedKey(SsiField),
    #[error("unsupported keyssi version {0}")]
    UnsupportedVersion(String),
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("entropy source failed: {0}")]
    Entropy(String),
}

impl KeySsiError {
    pub(crate) fn parse(field: SsiField, reason: impl Into<String>) -> Self {
        KeySsiError::Parse {
            field,
            reason: reason.into(),
        }
    }
}

/// A parsed identifier. Construct with [`KeySsi::parse`] or the generators.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeySsi {
    ssi_type: SsiType,
    domain: String,
    type_specific: String,
    control: String,
    version: String,
    hint: Option<String>,
}

impl KeySsi {
    /// Builds an identifier from already validated parts.
    pub(crate) fn from_parts(
        ssi_type: SsiType,
        domain: &str,
        type_specific: String,
        control: String,
        version: &str,
        hint: Option<String>,
    ) -> KeySsi {
        KeySsi {
            ssi_type,
            domain: domain.to_owned(),
            type_specific,
            control,
            version: version.to_owned(),
            hint,
        }
    }

    pub fn parse(text: &str) -> Result<KeySsi, KeySsiError> {
        grammar::parse(text)
    }

    /// Canonical text form. The version is always written out.
    pub fn serialize(&self) -> String {
        let mut out = format!(
            "{SCHEMA}:{}:{}:{}:{}:{}",
            self.ssi_type, self.domain, self.type_specific, self.control, self.version
        );
        if let Some(hint) = &self.hint {
            out.push(':');
            out.push_str(hint);
        }
        out
    }

    /// A hash-link identifier pointing at a brick map.
    pub fn hashlink(domain: &str, brick_hash_hex: &str) -> Result<KeySsi, KeySsiError> {
        validate_domain(domain)?;
        grammar::validate_token(SsiField::TypeSpecific, brick_hash_hex, false)?;
        Ok(KeySsi::from_parts(
            SsiType::HashLink,
            domain,
            brick_hash_hex.to_owned(),
            String::new(),
            DEFAULT_VERSION,
            None,
        ))
    }

    pub fn ssi_type(&self) -> SsiType {
        self.ssi_type
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn type_specific(&self) -> &str {
        &self.type_specific
    }

    pub fn control(&self) -> &str {
        &self.control
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn hint(&self) -> Option<&str> {
        self.hint.as_deref()
    }

    pub fn with_hint(mut self, hint: Option<&str>) -> Result<KeySsi, KeySsiError> {
        if let Some(h) = hint {
            grammar::validate_token(SsiField::Hint, h, false)?;
        }
        self.hint = hint.map(str::to_owned);
        Ok(self)
    }

    pub fn family(&self) -> Option<Family> {
        self.ssi_type.family()
    }

    pub fn access_level(&self) -> Option<AccessLevel> {
        self.ssi_type.access_level()
    }

    /// True when `self` has at least `level` rank.
    pub fn grants(&self, level: AccessLevel) -> bool {
        self.access_level().is_some_and(|l| l >= level)
    }

    pub(crate) fn require(&self, level: AccessLevel) -> Result<(), KeySsiError> {
        if self.grants(level) {
            Ok(())
        } else {
            Err(KeySsiError::InsufficientPrivilege {
                required: level,
                actual: self
                    .access_level()
                    .map_or_else(|| self.ssi_type.to_string(), |l| l.to_string()),
            })
        }
    }
}

impl fmt::Display for KeySsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl fmt::Debug for KeySsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Owner, anchor and read ranks carry secrets in the type-specific field.
        let secret = self.grants(AccessLevel::Read);
        f.debug_struct("KeySsi")
            .field("type", &self.ssi_type)
            .field("domain", &self.domain)
            .field(
                "type_specific",
                &if secret { "<redacted>" } else { self.type_specific.as_str() },
            )
            .field("control", &self.control)
            .field("version", &self.version)
            .field("hint", &self.hint)
            .finish()
    }
}

impl FromStr for KeySsi {
    type Err = KeySsiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeySsi::parse(s)
    }
}

impl Serialize for KeySsi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&KeySsi::serialize(self))
    }
}

impl<'de> Deserialize<'de> for KeySsi {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        KeySsi::parse(&text).map_err(serde::de::Error::custom)
    }
}
