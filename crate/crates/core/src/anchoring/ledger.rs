//! Ledger backends: the consensus oracle behind anchoring.
//!
//! Every backend offers one atomic compare-and-append per anchor. An append
//! succeeds iff its signature verifies and its expected previous link is the
//! current tail.

use std::collections::HashMap;
use std::sync::{mpsc, Arc};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::types::{now_millis, verify_append, AnchorEntry, AnchorId, HashLink};
use super::AnchorError;

/// Light anchors keep only links and signatures on the ledger; heavy
/// anchors also keep ledger-side timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorPolicy {
    #[default]
    Light,
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub entry: AnchorEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerReceipt {
    /// Position of the new entry in the anchor's history.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

/// Called exactly once with the ledger's verdict on a submission.
pub type Completion = Box<dyn FnOnce(Result<LedgerReceipt, AnchorError>) + Send>;

pub trait LedgerBackend: Send + Sync {
    fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError>;

    /// Queues a compare-and-append; `done` receives the outcome, possibly
    /// before this call returns.
    fn submit(
        &self,
        anchor_id: &AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
        done: Completion,
    );

    fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError>;

    fn tail(&self, anchor_id: &AnchorId) -> Result<Option<HashLink>, AnchorError> {
        Ok(self.history(anchor_id)?.pop().map(|e| e.entry.link))
    }

    /// Blocking form of [`LedgerBackend::submit`].
    fn compare_and_append(
        &self,
        anchor_id: &AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
    ) -> Result<LedgerReceipt, AnchorError> {
        let (tx, rx) = mpsc::sync_channel(1);
        self.submit(
            anchor_id,
            entry,
            expected_last,
            Box::new(move |result| {
                let _ = tx.send(result);
            }),
        );
        rx.recv()
            .unwrap_or_else(|_| Err(AnchorError::Unavailable("ledger dropped the request".into())))
    }

    fn exists(&self, anchor_id: &AnchorId) -> Result<bool, AnchorError> {
        match self.tail(anchor_id) {
            Ok(_) => Ok(true),
            Err(AnchorError::NotFound(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// In-memory per-anchor histories with the compare-and-append rule. Shared
/// by every concrete backend.
#[derive(Default)]
pub struct LedgerState {
    anchors: RwLock<HashMap<AnchorId, Arc<Mutex<Vec<LedgerEntry>>>>>,
    policy: AnchorPolicy,
}

impl LedgerState {
    pub fn new(policy: AnchorPolicy) -> LedgerState {
        LedgerState {
            anchors: RwLock::default(),
            policy,
        }
    }

    pub fn policy(&self) -> AnchorPolicy {
        self.policy
    }

    fn slot(&self, anchor_id: &AnchorId) -> Result<Arc<Mutex<Vec<LedgerEntry>>>, AnchorError> {
        self.anchors
            .read()
            .get(anchor_id)
            .cloned()
            .ok_or_else(|| AnchorError::NotFound(anchor_id.to_string()))
    }

    pub fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        let mut anchors = self.anchors.write();
        if anchors.contains_key(anchor_id) {
            return Err(AnchorError::AlreadyExists(anchor_id.to_string()));
        }
        anchors.insert(anchor_id.clone(), Arc::default());
        Ok(())
    }

    /// Checks an append without applying it and returns the entry to store.
    fn check(
        &self,
        anchor_id: &AnchorId,
        history: &[LedgerEntry],
        entry: &AnchorEntry,
        expected_last: Option<&HashLink>,
    ) -> Result<LedgerEntry, AnchorError> {
        if !verify_append(anchor_id, &entry.link, expected_last, &entry.signature) {
            return Err(AnchorError::Auth(
                "signature does not verify against the anchor id".into(),
            ));
        }
        let tail = history.last().map(|e| &e.entry.link);
        if tail != expected_last {
            return Err(AnchorError::Conflict {
                expected: expected_last.map(ToString::to_string),
                actual: tail.map(ToString::to_string),
            });
        }
        Ok(LedgerEntry {
            entry: entry.clone(),
            timestamp: (self.policy == AnchorPolicy::Heavy).then(now_millis),
        })
    }

    pub fn append(
        &self,
        anchor_id: &AnchorId,
        entry: &AnchorEntry,
        expected_last: Option<&HashLink>,
    ) -> Result<LedgerReceipt, AnchorError> {
        self.append_with(anchor_id, entry, expected_last, |_| Ok(()))
    }

    /// Like [`LedgerState::append`], running `persist` on the accepted entry
    /// while the anchor is still locked. The entry is only applied if
    /// `persist` succeeds.
    pub fn append_with(
        &self,
        anchor_id: &AnchorId,
        entry: &AnchorEntry,
        expected_last: Option<&HashLink>,
        persist: impl FnOnce(&LedgerEntry) -> Result<(), AnchorError>,
    ) -> Result<LedgerReceipt, AnchorError> {
        let slot = self.slot(anchor_id)?;
        let mut history = slot.lock();
        let stored = self.check(anchor_id, &history, entry, expected_last)?;
        persist(&stored)?;
        let receipt = LedgerReceipt {
            index: history.len(),
            timestamp: stored.timestamp,
        };
        history.push(stored);
        Ok(receipt)
    }

    /// Applies an entry read back from durable storage. The signature chain
    /// is rechecked so a tampered log is caught on load.
    pub(crate) fn restore(&self, anchor_id: &AnchorId, stored: LedgerEntry) -> Result<(), AnchorError> {
        let slot = self.slot(anchor_id)?;
        let mut history = slot.lock();
        let previous = history.last().map(|e| &e.entry.link);
        if !verify_append(anchor_id, &stored.entry.link, previous, &stored.entry.signature) {
            return Err(AnchorError::Corrupt(format!(
                "entry {} of {anchor_id} does not verify",
                history.len()
            )));
        }
        history.push(stored);
        Ok(())
    }

    pub fn contains(&self, anchor_id: &AnchorId) -> bool {
        self.anchors.read().contains_key(anchor_id)
    }

    pub fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
        Ok(self.slot(anchor_id)?.lock().clone())
    }

    pub fn tail(&self, anchor_id: &AnchorId) -> Result<Option<HashLink>, AnchorError> {
        Ok(self.slot(anchor_id)?.lock().last().map(|e| e.entry.link.clone()))
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.read().len()
    }
}

/// Ledger that confirms synchronously in process memory.
#[derive(Default)]
pub struct MemoryLedger {
    state: LedgerState,
}

impl MemoryLedger {
    pub fn new(policy: AnchorPolicy) -> MemoryLedger {
        MemoryLedger {
            state: LedgerState::new(policy),
        }
    }
}

impl LedgerBackend for MemoryLedger {
    fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        self.state.create(anchor_id)
    }

    fn submit(
        &self,
        anchor_id: &AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
        done: Completion,
    ) {
        done(self.state.append(anchor_id, &entry, expected_last.as_ref()));
    }

    fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
        self.state.history(anchor_id)
    }

    fn tail(&self, anchor_id: &AnchorId) -> Result<Option<HashLink>, AnchorError> {
        self.state.tail(anchor_id)
    }
}
