//! ECIES over X25519 with HKDF-SHA-256 and AES-256-GCM.
//!
//! Ciphertext layout: `ephemeral public key (32) ‖ nonce (12) ‖ body ‖ tag`.

use rand::rngs::OsRng;
use x25519_dalek::{EphemeralSecret, PublicKey};

use super::MessagingError;
use crate::crypto::{b64, hkdf32, open, seal, unb64};
use crate::keyssi::{ecies_public_key, ecies_secret, KeySsi, SsiField, SsiType, DEFAULT_VERSION};

const INFO: &[u8] = b"dsu-ecies-v0";
const EPHEMERAL_LEN: usize = 32;

fn derive_key(shared: &[u8; 32], ephemeral: &PublicKey, recipient: &PublicKey) -> [u8; 32] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral.as_bytes());
    salt[32..].copy_from_slice(recipient.as_bytes());
    hkdf32(shared, Some(&salt), INFO)
}

/// Encrypts to the family of `recipient`, which must be Public rank or
/// above. Every call uses a fresh ephemeral key.
pub fn ecies_encrypt(recipient: &KeySsi, plaintext: &[u8]) -> Result<Vec<u8>, MessagingError> {
    let recipient_key = ecies_public_key(recipient)?;
    let secret = EphemeralSecret::random_from_rng(OsRng);
    let ephemeral = PublicKey::from(&secret);
    let shared = secret.diffie_hellman(&recipient_key);
    if !shared.was_contributory() {
        return Err(MessagingError::Decrypt);
    }
    let key = derive_key(shared.as_bytes(), &ephemeral, &recipient_key);
    let mut out = Vec::with_capacity(EPHEMERAL_LEN + plaintext.len() + crate::crypto::SEAL_OVERHEAD);
    out.extend_from_slice(ephemeral.as_bytes());
    out.extend_from_slice(&seal(&key, plaintext));
    Ok(out)
}

/// Decrypts with the family's private key (Owner, or Anchor in the Secret
/// family). Any mismatch is [`MessagingError::Decrypt`].
pub fn ecies_decrypt(owner: &KeySsi, ciphertext: &[u8]) -> Result<Vec<u8>, MessagingError> {
    let secret = ecies_secret(owner)?;
    if ciphertext.len() < EPHEMERAL_LEN {
        return Err(MessagingError::Decrypt);
    }
    let (head, body) = ciphertext.split_at(EPHEMERAL_LEN);
    let ephemeral = PublicKey::from(<[u8; 32]>::try_from(head).expect("split at 32"));
    let shared = secret.diffie_hellman(&ephemeral);
    if !shared.was_contributory() {
        return Err(MessagingError::Decrypt);
    }
    let key = derive_key(shared.as_bytes(), &ephemeral, &PublicKey::from(&secret));
    open(&key, body).ok_or(MessagingError::Decrypt)
}

/// Wraps `to_share` for `recipient` as `ssi:enc:<domain>:<sealed>:<ephemeral>:v0`.
pub fn wrap_enc_ssi(to_share: &KeySsi, recipient: &KeySsi) -> Result<KeySsi, MessagingError> {
    let sealed = ecies_encrypt(recipient, to_share.serialize().as_bytes())?;
    let (ephemeral, body) = sealed.split_at(EPHEMERAL_LEN);
    Ok(KeySsi::from_parts(
        SsiType::Enc,
        recipient.domain(),
        b64(body),
        b64(ephemeral),
        DEFAULT_VERSION,
        None,
    ))
}

pub fn unwrap_enc_ssi(owner: &KeySsi, enc: &KeySsi) -> Result<KeySsi, MessagingError> {
    let malformed = |field| MessagingError::Key(crate::KeySsiError::MalformedKey(field));
    if enc.ssi_type() != SsiType::Enc {
        return Err(malformed(SsiField::Type));
    }
    let ephemeral = unb64(enc.control())
        .filter(|e| e.len() == EPHEMERAL_LEN)
        .ok_or_else(|| malformed(SsiField::Control))?;
    let body = unb64(enc.type_specific()).ok_or_else(|| malformed(SsiField::TypeSpecific))?;
    let mut sealed = ephemeral;
    sealed.extend_from_slice(&body);
    let plain = ecies_decrypt(owner, &sealed)?;
    let text = String::from_utf8(plain).map_err(|_| MessagingError::Decrypt)?;
    Ok(KeySsi::parse(&text)?)
}
