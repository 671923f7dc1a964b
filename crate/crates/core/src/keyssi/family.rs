//! Key material and derivation for the Seed and Secret families.
//!
//! Seed family:
//!
//! ```text
//! seed   specific = entropy                      control = H(ed25519 pk)
//! sread  specific = H(entropy)                   control = ed25519 pk ‖ x25519 pk
//! sza    specific = H(public descriptor)         control = H(ed25519 pk)
//! ```
//!
//! Secret family, where every step hashes the parent material with the
//! rank label and the asymmetric keys come from the anchor material:
//!
//! ```text
//! secret specific = entropy                      control = H(ed25519 pk)
//! anchor specific = H(entropy ‖ "anchor")        control = pk bundle
//! read   specific = H(anchor ‖ "read")           control = pk bundle
//! public specific = H(read ‖ "public")           control = pk bundle
//! za     specific = H(public descriptor)         control = H(ed25519 pk)
//! ```
//!
//! The zero-access specific string only depends on the family's public
//! descriptor, so every rank of a family maps to the same anchor.

use ed25519_dalek::{SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use x25519_dalek::{PublicKey as EciesPublicKey, StaticSecret};

use super::grammar::{validate_domain, validate_token};
use super::{AccessLevel, Family, KeySsi, KeySsiError, SsiField, SsiType, DEFAULT_VERSION};
use crate::crypto::{b64, hkdf32, sha256, sha256_parts, unb64, SymmetricKey};

pub const ENTROPY_LEN: usize = 32;

const SIGN_LABEL: &[u8] = b"dsu-sign";
const ECIES_LABEL: &[u8] = b"dsu-ecies";
const READ_LABEL: &[u8] = b"dsu-read";
const PUBLIC_LABEL: &[u8] = b"dsu-public";
const SECRET_FOLDER_LABEL: &[u8] = b"dsu-secret-folder";

/// Length of the public key bundle carried by intermediate ranks.
const BUNDLE_LEN: usize = 64;

/// The asymmetric keys of a family, available to Owner and Anchor ranks.
pub struct FamilyKeys {
    signing: SigningKey,
    ecies: StaticSecret,
}

impl FamilyKeys {
    fn from_material(material: &[u8; 32]) -> FamilyKeys {
        FamilyKeys {
            signing: SigningKey::from_bytes(&hkdf32(material, None, SIGN_LABEL)),
            ecies: StaticSecret::from(hkdf32(material, None, ECIES_LABEL)),
        }
    }

    pub fn of(ssi: &KeySsi) -> Result<FamilyKeys, KeySsiError> {
        Ok(FamilyKeys::from_material(&signing_material(ssi)?))
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.signing
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn ecies_public(&self) -> EciesPublicKey {
        EciesPublicKey::from(&self.ecies)
    }

    fn bundle(&self) -> [u8; BUNDLE_LEN] {
        let mut out = [0u8; BUNDLE_LEN];
        out[..32].copy_from_slice(self.verifying_key().as_bytes());
        out[32..].copy_from_slice(self.ecies_public().as_bytes());
        out
    }

    fn commitment(&self) -> [u8; 32] {
        sha256(self.verifying_key().as_bytes())
    }
}

fn ensure_v0(ssi: &KeySsi) -> Result<(), KeySsiError> {
    if ssi.version() == DEFAULT_VERSION {
        Ok(())
    } else {
        Err(KeySsiError::UnsupportedVersion(ssi.version().to_owned()))
    }
}

fn decode32(text: &str, field: SsiField) -> Result<[u8; 32], KeySsiError> {
    unb64(text)
        .and_then(|v| <[u8; 32]>::try_from(v).ok())
        .ok_or(KeySsiError::MalformedKey(field))
}

fn family_of(ssi: &KeySsi) -> Result<Family, KeySsiError> {
    ssi.family().ok_or(KeySsiError::NotInFamily(ssi.ssi_type()))
}

/// Material the asymmetric keys are derived from.
fn signing_material(ssi: &KeySsi) -> Result<[u8; 32], KeySsiError> {
    ensure_v0(ssi)?;
    family_of(ssi)?;
    ssi.require(AccessLevel::Anchor)?;
    let own = decode32(ssi.type_specific(), SsiField::TypeSpecific)?;
    Ok(match ssi.ssi_type() {
        SsiType::Secret => sha256_parts(&[&own, b"anchor"]),
        _ => own,
    })
}

fn read_material(ssi: &KeySsi) -> Result<[u8; 32], KeySsiError> {
    ensure_v0(ssi)?;
    family_of(ssi)?;
    ssi.require(AccessLevel::Read)?;
    let own = decode32(ssi.type_specific(), SsiField::TypeSpecific)?;
    Ok(match ssi.ssi_type() {
        SsiType::Seed => sha256(&own),
        SsiType::Secret => sha256_parts(&[&sha256_parts(&[&own, b"anchor"]), b"read"]),
        SsiType::Anchor => sha256_parts(&[&own, b"read"]),
        _ => own,
    })
}

fn public_material(ssi: &KeySsi) -> Result<[u8; 32], KeySsiError> {
    if family_of(ssi)? != Family::Secret {
        return Err(KeySsiError::NotInFamily(ssi.ssi_type()));
    }
    ssi.require(AccessLevel::Public)?;
    if ssi.ssi_type() == SsiType::Public {
        ensure_v0(ssi)?;
        return decode32(ssi.type_specific(), SsiField::TypeSpecific);
    }
    Ok(sha256_parts(&[&read_material(ssi)?, b"public"]))
}

/// Public key bundle (ed25519 ‖ x25519) for every rank above zero access.
fn bundle(ssi: &KeySsi) -> Result<[u8; BUNDLE_LEN], KeySsiError> {
    ensure_v0(ssi)?;
    family_of(ssi)?;
    if ssi.grants(AccessLevel::Anchor) && ssi.ssi_type() != SsiType::Anchor {
        return Ok(FamilyKeys::of(ssi)?.bundle());
    }
    ssi.require(AccessLevel::Public)?;
    unb64(ssi.control())
        .and_then(|v| <[u8; BUNDLE_LEN]>::try_from(v).ok())
        .ok_or(KeySsiError::MalformedKey(SsiField::Control))
}

/// SHA-256 of the family's Ed25519 public key; identical for every rank.
pub(crate) fn family_commitment(ssi: &KeySsi) -> Result<[u8; 32], KeySsiError> {
    ensure_v0(ssi)?;
    family_of(ssi)?;
    match ssi.access_level() {
        Some(AccessLevel::ZeroAccess) => decode32(ssi.control(), SsiField::Control),
        Some(AccessLevel::Owner) => Ok(FamilyKeys::of(ssi)?.commitment()),
        _ => Ok(sha256(&bundle(ssi)?[..32])),
    }
}

fn zero_access_specific(family: Family, domain: &str, bundle: &[u8; BUNDLE_LEN]) -> String {
    let descriptor = format!(
        "{}:{}:{}:{}",
        family.owner_type(),
        domain,
        b64(bundle),
        DEFAULT_VERSION
    );
    b64(&sha256(descriptor.as_bytes()))
}

/// Derives the next lower rank of `ssi`'s family.
pub fn derive(ssi: &KeySsi) -> Result<KeySsi, KeySsiError> {
    let lower = ssi
        .ssi_type()
        .lower()
        .ok_or(KeySsiError::NoLowerLevel(ssi.ssi_type()))?;
    ensure_v0(ssi)?;
    let family = family_of(ssi)?;
    let (specific, control) = match lower {
        SsiType::SRead | SsiType::Read => (b64(&read_material(ssi)?), b64(&bundle(ssi)?)),
        SsiType::Anchor => (b64(&signing_material(ssi)?), b64(&bundle(ssi)?)),
        SsiType::Public => (b64(&public_material(ssi)?), b64(&bundle(ssi)?)),
        SsiType::SZa | SsiType::Za => {
            let bundle = bundle(ssi)?;
            (
                zero_access_specific(family, ssi.domain(), &bundle),
                b64(&sha256(&bundle[..32])),
            )
        }
        other => unreachable!("{other} is never a derivation target"),
    };
    Ok(KeySsi::from_parts(
        lower,
        ssi.domain(),
        specific,
        control,
        ssi.version(),
        ssi.hint().map(str::to_owned),
    ))
}

/// Walks the derivation chain down to the zero-access rank, dropping the hint.
pub(crate) fn zero_access_of(ssi: &KeySsi) -> Result<KeySsi, KeySsiError> {
    family_of(ssi)?;
    let mut current = ssi.clone().with_hint(None)?;
    while current.access_level() != Some(AccessLevel::ZeroAccess) {
        current = derive(&current)?;
    }
    Ok(current)
}

fn owner_from_entropy(
    owner: SsiType,
    domain: &str,
    entropy: &[u8; ENTROPY_LEN],
) -> Result<KeySsi, KeySsiError> {
    validate_domain(domain)?;
    let mut ssi = KeySsi::from_parts(
        owner,
        domain,
        b64(entropy),
        String::new(),
        DEFAULT_VERSION,
        None,
    );
    let control = b64(&FamilyKeys::of(&ssi)?.commitment());
    ssi = KeySsi::from_parts(owner, domain, ssi.type_specific, control, DEFAULT_VERSION, None);
    Ok(ssi)
}

pub fn seed_ssi_from_entropy(
    domain: &str,
    entropy: &[u8; ENTROPY_LEN],
) -> Result<KeySsi, KeySsiError> {
    owner_from_entropy(SsiType::Seed, domain, entropy)
}

pub fn secret_ssi_from_entropy(
    domain: &str,
    entropy: &[u8; ENTROPY_LEN],
) -> Result<KeySsi, KeySsiError> {
    owner_from_entropy(SsiType::Secret, domain, entropy)
}

fn draw_entropy<R: RngCore + CryptoRng>(rng: &mut R) -> Result<[u8; ENTROPY_LEN], KeySsiError> {
    let mut entropy = [0u8; ENTROPY_LEN];
    rng.try_fill_bytes(&mut entropy)
        .map_err(|e| KeySsiError::Entropy(e.to_string()))?;
    Ok(entropy)
}

pub fn generate_seed_ssi<R: RngCore + CryptoRng>(
    domain: &str,
    rng: &mut R,
) -> Result<KeySsi, KeySsiError> {
    validate_domain(domain)?;
    seed_ssi_from_entropy(domain, &draw_entropy(rng)?)
}

pub fn generate_secret_ssi<R: RngCore + CryptoRng>(
    domain: &str,
    rng: &mut R,
) -> Result<KeySsi, KeySsiError> {
    validate_domain(domain)?;
    secret_ssi_from_entropy(domain, &draw_entropy(rng)?)
}

/// Symmetric DSU key, shared by every rank at or above Read.
pub fn encryption_key(ssi: &KeySsi) -> Result<SymmetricKey, KeySsiError> {
    Ok(hkdf32(&read_material(ssi)?, None, READ_LABEL))
}

/// Key for content that Public-rank holders of a Secret family may read.
pub(crate) fn public_section_key(ssi: &KeySsi) -> Result<SymmetricKey, KeySsiError> {
    Ok(hkdf32(&public_material(ssi)?, None, PUBLIC_LABEL))
}

/// Key protecting the SecretDSU `/secret` folder, Anchor rank and above.
pub(crate) fn secret_folder_key(ssi: &KeySsi) -> Result<SymmetricKey, KeySsiError> {
    Ok(hkdf32(&signing_material(ssi)?, None, SECRET_FOLDER_LABEL))
}

pub(crate) fn ecies_public_key(ssi: &KeySsi) -> Result<EciesPublicKey, KeySsiError> {
    let bundle = bundle(ssi)?;
    let mut key = [0u8; 32];
    key.copy_from_slice(&bundle[32..]);
    Ok(EciesPublicKey::from(key))
}

pub(crate) fn ecies_secret(ssi: &KeySsi) -> Result<StaticSecret, KeySsiError> {
    Ok(FamilyKeys::of(ssi)?.ecies)
}

/// A human-memorable `const` identifier.
pub fn create_const_ssi(domain: &str, human_name: &str) -> Result<KeySsi, KeySsiError> {
    validate_domain(domain)?;
    if human_name.is_empty() {
        return Err(KeySsiError::InvalidName("name is empty".into()));
    }
    if human_name.contains(':') {
        return Err(KeySsiError::InvalidName(format!(
            "{human_name:?} contains ':'"
        )));
    }
    validate_token(SsiField::TypeSpecific, human_name, false)
        .map_err(|_| KeySsiError::InvalidName(format!("{human_name:?} is not printable")))?;
    Ok(KeySsi::from_parts(
        SsiType::Const,
        domain,
        human_name.to_owned(),
        String::new(),
        DEFAULT_VERSION,
        None,
    ))
}
