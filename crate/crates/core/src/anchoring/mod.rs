//! Light anchors: append-only, signed histories of brick-map hash links.
//!
//! A [`LedgerBackend`] is the consensus oracle and offers one atomic
//! compare-and-append per anchor. An [`AnchoringService`] is a node in front
//! of a ledger that executes appends either validated (wait for the ledger)
//! or optimistically (acknowledge after local checks, reconcile later).

mod filelog;
mod ledger;
mod service;
mod simchain;
mod types;

use thiserror::Error;

pub use filelog::FileLedger;
pub use ledger::{
    AnchorPolicy, Completion, LedgerBackend, LedgerEntry, LedgerReceipt, LedgerState, MemoryLedger,
};
pub use service::{AnchorEvent, AnchoringService, Dispatch, InvalidationEvent};
pub use simchain::{SimChainConfig, SimulatedChain};
pub use types::{
    now_millis, signing_payload, validate_history, verify_append, AnchorEntry, AnchorId,
    AnchorRecord, AppendReceipt, AppendRequest, EntryStatus, ExecutionMode, HashLink,
    ValidationReport, VersionEntry, EMPTY_SENTINEL,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("anchor {0} not found")]
    NotFound(String),
    #[error("anchor {0} already exists")]
    AlreadyExists(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("stale expected_last: expected {expected:?}, ledger tail is {actual:?}")]
    Conflict {
        expected: Option<String>,
        actual: Option<String>,
    },
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
    #[error("ledger I/O: {0}")]
    Io(String),
    #[error("ledger log is corrupt: {0}")]
    Corrupt(String),
}

impl AnchorError {
    /// Whether the same request may succeed if retried later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AnchorError::Unavailable(_) | AnchorError::Io(_))
    }
}

impl From<std::io::Error> for AnchorError {
    fn from(e: std::io::Error) -> Self {
        AnchorError::Io(e.to_string())
    }
}

/// What a DSU needs from an anchoring endpoint, local or remote.
pub trait AnchorClient: Send + Sync {
    fn create_anchor(&self, anchor_id: &AnchorId) -> Result<(), AnchorError>;

    fn append_version(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError>;

    fn get_versions(
        &self,
        anchor_id: &AnchorId,
        include_pending: bool,
    ) -> Result<Vec<VersionEntry>, AnchorError>;
}
