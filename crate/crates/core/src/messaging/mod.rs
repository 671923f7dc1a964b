//! Wallet messaging: ECIES between identities, encSSI key wrappers, owner
//! read message queues keyed by AnchorId, and anchor update notifications.

mod ecies;
mod mq;
mod notify;

use thiserror::Error;

pub use ecies::{ecies_decrypt, ecies_encrypt, unwrap_enc_ssi, wrap_enc_ssi};
pub use mq::{sign_take, take_payload, MessageQueues, MqMessage, DEFAULT_QUEUE_CAPACITY, NONCE_TTL};
pub use notify::{Notifier, Subscription};

use crate::anchoring::AnchorError;
use crate::keyssi::KeySsiError;

#[derive(Debug, Error)]
pub enum MessagingError {
    #[error(transparent)]
    Key(#[from] KeySsiError),
    #[error("decryption failed")]
    Decrypt,
    #[error("{0} not found")]
    NotFound(String),
    #[error("queue {channel} is full ({capacity} messages)")]
    Backpressure { channel: String, capacity: usize },
    #[error("authorization failed: {0}")]
    Auth(String),
    #[error("cursor {0} is not in the anchor history")]
    UnknownCursor(String),
    #[error(transparent)]
    Anchor(AnchorError),
}

impl From<AnchorError> for MessagingError {
    fn from(e: AnchorError) -> Self {
        match e {
            AnchorError::NotFound(id) => MessagingError::NotFound(id),
            other => MessagingError::Anchor(other),
        }
    }
}
