//! An anchoring node: validated and optimistic execution over a shared ledger.
//!
//! The node keeps a local table of optimistic entries the ledger has not yet
//! confirmed. Reads and a periodic tick pull the ledger history and settle
//! those entries as confirmed or invalidated. Invalidated entries are kept
//! for audit.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{mpsc, Arc, Weak};
use std::thread;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::ledger::{LedgerBackend, LedgerEntry, LedgerReceipt};
use super::types::{
    now_millis, verify_append, AnchorEntry, AnchorId, AnchorRecord, AppendReceipt, AppendRequest,
    EntryStatus, ExecutionMode, HashLink, VersionEntry,
};
use super::{AnchorClient, AnchorError};

/// How optimistic submissions reach the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dispatch {
    /// Submit as soon as the append is acknowledged.
    #[default]
    Immediate,
    /// Hold submissions until [`AnchoringService::dispatch_one`] is called.
    /// Lets tests drive every interleaving deterministically.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidationEvent {
    pub anchor_id: AnchorId,
    pub link: HashLink,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorEvent {
    Confirmed {
        anchor_id: AnchorId,
        link: HashLink,
        /// Local wall clock when the node learned of the confirmation.
        at: u64,
    },
    Invalidated(InvalidationEvent),
}

struct Pending {
    entry: AnchorEntry,
    expected_last: Option<HashLink>,
    accepted_at: u64,
    in_flight: bool,
}

struct Invalidated {
    entry: AnchorEntry,
    accepted_at: u64,
}

#[derive(Default)]
struct LocalAnchor {
    last_confirmed: Option<HashLink>,
    confirmed_len: usize,
    pending: VecDeque<Pending>,
    invalidated: Vec<Invalidated>,
    unreported: Vec<InvalidationEvent>,
}

impl LocalAnchor {
    fn tail(&self) -> Option<&HashLink> {
        self.pending
            .back()
            .map(|p| &p.entry.link)
            .or(self.last_confirmed.as_ref())
    }

    fn note_confirmed(&mut self, link: Option<&HashLink>, len: usize) {
        if len >= self.confirmed_len {
            self.confirmed_len = len;
            self.last_confirmed = link.cloned();
        }
    }

    fn invalidate(&mut self, anchor_id: &AnchorId, index: usize, reason: &str) -> InvalidationEvent {
        let pending = self.pending.remove(index).expect("index in range");
        let event = InvalidationEvent {
            anchor_id: anchor_id.clone(),
            link: pending.entry.link.clone(),
            reason: reason.to_owned(),
        };
        self.invalidated.push(Invalidated {
            entry: pending.entry,
            accepted_at: pending.accepted_at,
        });
        self.unreported.push(event.clone());
        event
    }
}

struct Submission {
    anchor_id: AnchorId,
    entry: AnchorEntry,
    expected_last: Option<HashLink>,
}

pub struct AnchoringService {
    me: Weak<AnchoringService>,
    ledger: Arc<dyn LedgerBackend>,
    dispatch: Dispatch,
    table: Mutex<HashMap<AnchorId, LocalAnchor>>,
    // Held from local acceptance to submission so the ledger sees one
    // anchor's entries in acceptance order.
    submit_locks: Mutex<HashMap<AnchorId, Arc<Mutex<()>>>>,
    outbox: Mutex<VecDeque<Submission>>,
    subscribers: Mutex<Vec<mpsc::Sender<AnchorEvent>>>,
}

impl AnchoringService {
    pub fn new(ledger: Arc<dyn LedgerBackend>) -> Arc<AnchoringService> {
        Self::with_dispatch(ledger, Dispatch::Immediate)
    }

    pub fn with_dispatch(ledger: Arc<dyn LedgerBackend>, dispatch: Dispatch) -> Arc<AnchoringService> {
        Arc::new_cyclic(|me| AnchoringService {
            me: me.clone(),
            ledger,
            dispatch,
            table: Mutex::default(),
            submit_locks: Mutex::default(),
            outbox: Mutex::default(),
            subscribers: Mutex::default(),
        })
    }

    pub fn ledger(&self) -> &Arc<dyn LedgerBackend> {
        &self.ledger
    }

    pub fn create_anchor(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        self.ledger.create(anchor_id)?;
        self.table.lock().entry(anchor_id.clone()).or_default();
        Ok(())
    }

    pub fn append_version(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError> {
        if !verify_append(
            &request.anchor_id,
            &request.new_link,
            request.expected_last.as_ref(),
            &request.signature,
        ) {
            return Err(AnchorError::Auth(
                "signature does not verify against the anchor id".into(),
            ));
        }
        match request.mode {
            ExecutionMode::Validated => self.append_validated(request),
            ExecutionMode::Optimistic => self.append_optimistic(request),
        }
    }

    fn append_validated(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError> {
        let AppendRequest {
            anchor_id,
            new_link,
            expected_last,
            signature,
            ..
        } = request;
        let entry = AnchorEntry {
            link: new_link.clone(),
            signature,
        };
        let receipt = self.ledger.compare_and_append(&anchor_id, entry, expected_last)?;
        self.table
            .lock()
            .entry(anchor_id.clone())
            .or_default()
            .note_confirmed(Some(&new_link), receipt.index + 1);
        let at = now_millis();
        self.publish(vec![AnchorEvent::Confirmed {
            anchor_id,
            link: new_link,
            at,
        }]);
        Ok(AppendReceipt {
            accepted_at: at,
            status: EntryStatus::Confirmed,
        })
    }

    fn append_optimistic(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError> {
        let lock = self.submit_lock(&request.anchor_id);
        let _order = lock.lock();
        self.ensure_known(&request.anchor_id)?;

        let accepted = match self.try_accept(&request) {
            Ok(at) => at,
            Err(_) => {
                // The local view may lag writes made through other nodes.
                self.sync(&request.anchor_id)?;
                self.try_accept(&request).map_err(|actual| AnchorError::Conflict {
                    expected: request.expected_last.as_ref().map(ToString::to_string),
                    actual: actual.map(|l| l.to_string()),
                })?
            }
        };
        self.send(Submission {
            anchor_id: request.anchor_id,
            entry: AnchorEntry {
                link: request.new_link,
                signature: request.signature,
            },
            expected_last: request.expected_last,
        });
        Ok(AppendReceipt {
            accepted_at: accepted,
            status: EntryStatus::PendingOptimistic,
        })
    }

    /// Records a pending entry if `expected_last` matches the local tail;
    /// otherwise returns the local tail.
    fn try_accept(&self, request: &AppendRequest) -> Result<u64, Option<HashLink>> {
        let mut table = self.table.lock();
        let local = table.entry(request.anchor_id.clone()).or_default();
        if local.tail() != request.expected_last.as_ref() {
            return Err(local.tail().cloned());
        }
        let accepted_at = now_millis();
        local.pending.push_back(Pending {
            entry: AnchorEntry {
                link: request.new_link.clone(),
                signature: request.signature.clone(),
            },
            expected_last: request.expected_last.clone(),
            accepted_at,
            in_flight: true,
        });
        Ok(accepted_at)
    }

    fn ensure_known(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        if self.table.lock().contains_key(anchor_id) {
            return Ok(());
        }
        self.sync(anchor_id)
    }

    fn submit_lock(&self, anchor_id: &AnchorId) -> Arc<Mutex<()>> {
        Arc::clone(self.submit_locks.lock().entry(anchor_id.clone()).or_default())
    }

    fn send(&self, submission: Submission) {
        match self.dispatch {
            Dispatch::Immediate => self.submit_now(submission),
            Dispatch::Manual => self.outbox.lock().push_back(submission),
        }
    }

    fn submit_now(&self, submission: Submission) {
        let me = self.me.clone();
        let anchor_id = submission.anchor_id.clone();
        let link = submission.entry.link.clone();
        self.ledger.submit(
            &submission.anchor_id,
            submission.entry,
            submission.expected_last,
            Box::new(move |result| {
                if let Some(service) = me.upgrade() {
                    service.complete(&anchor_id, &link, result);
                }
            }),
        );
    }

    /// Submits the oldest held optimistic entry. Returns false when none is held.
    pub fn dispatch_one(&self) -> bool {
        let next = self.outbox.lock().pop_front();
        match next {
            Some(submission) => {
                self.submit_now(submission);
                true
            }
            None => false,
        }
    }

    pub fn dispatch_all(&self) -> usize {
        let mut n = 0;
        while self.dispatch_one() {
            n += 1;
        }
        n
    }

    fn complete(&self, anchor_id: &AnchorId, link: &HashLink, result: Result<LedgerReceipt, AnchorError>) {
        let mut events = Vec::new();
        {
            let mut table = self.table.lock();
            let Some(local) = table.get_mut(anchor_id) else {
                return;
            };
            // Already settled by a sync.
            let Some(index) = local.pending.iter().position(|p| &p.entry.link == link) else {
                return;
            };
            match result {
                Ok(receipt) => {
                    local.pending.remove(index);
                    local.note_confirmed(Some(link), receipt.index + 1);
                    events.push(AnchorEvent::Confirmed {
                        anchor_id: anchor_id.clone(),
                        link: link.clone(),
                        at: now_millis(),
                    });
                }
                Err(e @ (AnchorError::Conflict { .. } | AnchorError::Auth(_))) => {
                    let event = local.invalidate(anchor_id, index, &e.to_string());
                    events.push(AnchorEvent::Invalidated(event));
                }
                Err(_) => local.pending[index].in_flight = false,
            }
        }
        self.publish(events);
    }

    /// Pulls the ledger history and settles local pending entries against it.
    fn sync(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        let history = self.ledger.history(anchor_id)?;
        let events = {
            let mut table = self.table.lock();
            let local = table.entry(anchor_id.clone()).or_default();
            settle(anchor_id, local, &history)
        };
        self.publish(events);
        Ok(())
    }

    /// Settles pending entries against the ledger, resubmits entries whose
    /// submission failed transiently and returns invalidations not yet
    /// reported by a previous call.
    pub fn reconcile(&self, anchor_id: &AnchorId) -> Result<Vec<InvalidationEvent>, AnchorError> {
        self.sync(anchor_id)?;
        self.resubmit(anchor_id);
        let mut table = self.table.lock();
        Ok(table
            .get_mut(anchor_id)
            .map(|local| std::mem::take(&mut local.unreported))
            .unwrap_or_default())
    }

    fn resubmit(&self, anchor_id: &AnchorId) {
        let lock = self.submit_lock(anchor_id);
        let _order = lock.lock();
        let retries: Vec<Submission> = {
            let mut table = self.table.lock();
            let Some(local) = table.get_mut(anchor_id) else {
                return;
            };
            local
                .pending
                .iter_mut()
                .filter(|p| !p.in_flight)
                .map(|p| {
                    p.in_flight = true;
                    Submission {
                        anchor_id: anchor_id.clone(),
                        entry: p.entry.clone(),
                        expected_last: p.expected_last.clone(),
                    }
                })
                .collect()
        };
        for submission in retries {
            self.send(submission);
        }
    }

    /// The anchor's versions in order: confirmed entries and, when asked,
    /// this node's pending optimistic entries after them.
    pub fn get_versions(
        &self,
        anchor_id: &AnchorId,
        include_pending: bool,
    ) -> Result<Vec<VersionEntry>, AnchorError> {
        let mut attempts = 0;
        loop {
            let history = self.ledger.history(anchor_id)?;
            let mut table = self.table.lock();
            let local = table.entry(anchor_id.clone()).or_default();
            // A confirmation landed between the read and the lock; the
            // entry has left the pending list but is missing from `history`.
            if local.confirmed_len > history.len() && attempts < 3 {
                attempts += 1;
                continue;
            }
            let events = settle(anchor_id, local, &history);
            let mut versions: Vec<VersionEntry> = history
                .into_iter()
                .map(|e| VersionEntry {
                    link: e.entry.link,
                    signature: e.entry.signature,
                    status: EntryStatus::Confirmed,
                    timestamp: e.timestamp,
                })
                .collect();
            if include_pending {
                versions.extend(local.pending.iter().map(|p| VersionEntry {
                    link: p.entry.link.clone(),
                    signature: p.entry.signature.clone(),
                    status: EntryStatus::PendingOptimistic,
                    timestamp: Some(p.accepted_at),
                }));
            }
            drop(table);
            self.publish(events);
            return Ok(versions);
        }
    }

    pub fn record(&self, anchor_id: &AnchorId, include_pending: bool) -> Result<AnchorRecord, AnchorError> {
        Ok(AnchorRecord {
            anchor_id: anchor_id.clone(),
            history: self.get_versions(anchor_id, include_pending)?,
        })
    }

    /// Optimistic entries this node accepted that the ledger rejected.
    pub fn invalidated(&self, anchor_id: &AnchorId) -> Vec<VersionEntry> {
        self.table.lock().get(anchor_id).map_or_else(Vec::new, |local| {
            local
                .invalidated
                .iter()
                .map(|i| VersionEntry {
                    link: i.entry.link.clone(),
                    signature: i.entry.signature.clone(),
                    status: EntryStatus::Invalidated,
                    timestamp: Some(i.accepted_at),
                })
                .collect()
        })
    }

    /// Entries accepted locally and not yet settled, over all anchors.
    pub fn pending_count(&self) -> usize {
        self.table.lock().values().map(|l| l.pending.len()).sum()
    }

    pub fn invalidated_count(&self) -> usize {
        self.table.lock().values().map(|l| l.invalidated.len()).sum()
    }

    pub fn subscribe(&self) -> mpsc::Receiver<AnchorEvent> {
        let (tx, rx) = mpsc::channel();
        self.subscribers.lock().push(tx);
        rx
    }

    fn publish(&self, events: Vec<AnchorEvent>) {
        if events.is_empty() {
            return;
        }
        let mut subscribers = self.subscribers.lock();
        subscribers.retain(|tx| events.iter().all(|e| tx.send(e.clone()).is_ok()));
    }

    /// Settles every anchor with pending entries once per `interval`, until
    /// the service is dropped.
    pub fn spawn_reconciler(self: &Arc<Self>, interval: Duration) -> thread::JoinHandle<()> {
        let weak = Arc::downgrade(self);
        thread::spawn(move || loop {
            thread::sleep(interval);
            let Some(service) = weak.upgrade() else {
                return;
            };
            let busy: Vec<AnchorId> = service
                .table
                .lock()
                .iter()
                .filter(|(_, l)| !l.pending.is_empty())
                .map(|(id, _)| id.clone())
                .collect();
            for anchor_id in busy {
                if service.sync(&anchor_id).is_ok() {
                    service.resubmit(&anchor_id);
                }
            }
        })
    }
}

/// Promotes pending entries found in `history` and invalidates those whose
/// slot is already taken. History only grows, so a stale read never
/// produces a wrong verdict.
fn settle(anchor_id: &AnchorId, local: &mut LocalAnchor, history: &[LedgerEntry]) -> Vec<AnchorEvent> {
    let mut events = Vec::new();
    local.note_confirmed(history.last().map(|e| &e.entry.link), history.len());
    if local.pending.is_empty() {
        return events;
    }
    let position: HashMap<&HashLink, usize> = history
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.entry.link, i))
        .collect();
    let mut dead: HashSet<HashLink> = local.invalidated.iter().map(|i| i.entry.link.clone()).collect();
    let mut i = 0;
    while i < local.pending.len() {
        let pending = &local.pending[i];
        if position.contains_key(&pending.entry.link) {
            let confirmed = local.pending.remove(i).expect("index in range");
            events.push(AnchorEvent::Confirmed {
                anchor_id: anchor_id.clone(),
                link: confirmed.entry.link,
                at: now_millis(),
            });
            continue;
        }
        let reason = match &pending.expected_last {
            None if history.is_empty() => None,
            None => Some("the first version was anchored by another writer"),
            Some(prev) => match position.get(prev) {
                Some(&j) if j + 1 < history.len() => {
                    Some("another version was anchored after the same predecessor")
                }
                Some(_) => None,
                None if dead.contains(prev) => Some("predecessor was invalidated"),
                None if local.pending.iter().take(i).any(|q| &q.entry.link == prev) => None,
                None => Some("predecessor is unknown to the ledger"),
            },
        };
        match reason {
            Some(reason) => {
                let event = local.invalidate(anchor_id, i, reason);
                dead.insert(event.link.clone());
                events.push(AnchorEvent::Invalidated(event));
            }
            None => i += 1,
        }
    }
    events
}

impl AnchorClient for AnchoringService {
    fn create_anchor(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        AnchoringService::create_anchor(self, anchor_id)
    }

    fn append_version(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError> {
        AnchoringService::append_version(self, request)
    }

    fn get_versions(
        &self,
        anchor_id: &AnchorId,
        include_pending: bool,
    ) -> Result<Vec<VersionEntry>, AnchorError> {
        AnchoringService::get_versions(self, anchor_id, include_pending)
    }
}

#[cfg(test)]
mod tests {
    use std::time::Instant;

    use super::*;
    use crate::anchoring::{validate_history, MemoryLedger, SimChainConfig, SimulatedChain};
    use crate::brickstore::BrickHash;
    use crate::keyssi::seed_ssi_from_entropy;
    use crate::KeySsi;

    fn link(tag: &str) -> HashLink {
        HashLink::new("pharma", &BrickHash::of(tag.as_bytes())).unwrap()
    }

    fn family(n: u8) -> (KeySsi, AnchorId) {
        let seed = seed_ssi_from_entropy("pharma", &[n; 32]).unwrap();
        let id = AnchorId::for_family(&seed).unwrap();
        (seed, id)
    }

    fn request(seed: &KeySsi, id: &AnchorId, new: &str, prev: Option<&str>, mode: ExecutionMode) -> AppendRequest {
        AppendRequest::signed(seed, id.clone(), link(new), prev.map(link), mode).unwrap()
    }

    #[test]
    fn validated_appends_and_replay() {
        let (seed, id) = family(1);
        let node = AnchoringService::new(Arc::new(MemoryLedger::default()));
        assert!(matches!(node.get_versions(&id, false), Err(AnchorError::NotFound(_))));
        node.create_anchor(&id).unwrap();
        assert!(node.get_versions(&id, true).unwrap().is_empty());

        let first = request(&seed, &id, "a", None, ExecutionMode::Validated);
        let receipt = node.append_version(first.clone()).unwrap();
        assert_eq!(receipt.status, EntryStatus::Confirmed);
        assert!(matches!(
            node.append_version(first),
            Err(AnchorError::Conflict { .. })
        ));
        node.append_version(request(&seed, &id, "b", Some("a"), ExecutionMode::Validated))
            .unwrap();
        let links: Vec<_> = node
            .get_versions(&id, false)
            .unwrap()
            .into_iter()
            .map(|v| v.link)
            .collect();
        assert_eq!(links, vec![link("a"), link("b")]);

        let mut forged = request(&seed, &id, "c", Some("b"), ExecutionMode::Validated);
        forged.new_link = link("evil");
        assert!(matches!(node.append_version(forged), Err(AnchorError::Auth(_))));
        let (other_seed, _) = family(2);
        let foreign = request(&other_seed, &id, "c", Some("b"), ExecutionMode::Validated);
        assert!(matches!(node.append_version(foreign), Err(AnchorError::Auth(_))));
    }

    #[test]
    fn optimistic_replay_is_rejected_locally() {
        let (seed, id) = family(3);
        let node = AnchoringService::with_dispatch(Arc::new(MemoryLedger::default()), Dispatch::Manual);
        node.create_anchor(&id).unwrap();
        let req = request(&seed, &id, "a", None, ExecutionMode::Optimistic);
        let receipt = node.append_version(req.clone()).unwrap();
        assert_eq!(receipt.status, EntryStatus::PendingOptimistic);
        assert!(matches!(node.append_version(req), Err(AnchorError::Conflict { .. })));
        // chained optimistic appends on the local view
        node.append_version(request(&seed, &id, "b", Some("a"), ExecutionMode::Optimistic))
            .unwrap();
        assert_eq!(node.get_versions(&id, false).unwrap().len(), 0);
        assert_eq!(node.get_versions(&id, true).unwrap().len(), 2);
        assert_eq!(node.dispatch_all(), 2);
        assert!(node.reconcile(&id).unwrap().is_empty());
        let versions = node.get_versions(&id, false).unwrap();
        assert_eq!(versions.len(), 2);
        assert!(versions.iter().all(|v| v.status == EntryStatus::Confirmed));
    }

    #[test]
    fn conflicting_nodes_one_winner_one_event() {
        let (seed, id) = family(4);
        let ledger: Arc<dyn LedgerBackend> = Arc::new(MemoryLedger::default());
        let n1 = AnchoringService::with_dispatch(Arc::clone(&ledger), Dispatch::Manual);
        let n2 = AnchoringService::with_dispatch(Arc::clone(&ledger), Dispatch::Manual);
        n1.create_anchor(&id).unwrap();
        n1.append_version(request(&seed, &id, "x", None, ExecutionMode::Optimistic))
            .unwrap();
        n2.append_version(request(&seed, &id, "y", None, ExecutionMode::Optimistic))
            .unwrap();
        n2.dispatch_all();
        n1.dispatch_all();
        let events: Vec<_> = [&n1, &n2]
            .iter()
            .flat_map(|n| n.reconcile(&id).unwrap())
            .collect();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].link, link("x"));
        assert!(n1.reconcile(&id).unwrap().is_empty());
        assert_eq!(n1.invalidated(&id).len(), 1);
        assert_eq!(
            n1.get_versions(&id, true).unwrap(),
            n2.get_versions(&id, true).unwrap()
        );
    }

    #[test]
    fn sync_invalidates_before_dispatch() {
        // n1's entry is still held when n2's competing entry lands; reading
        // settles it without waiting for n1's own submission.
        let (seed, id) = family(5);
        let ledger: Arc<dyn LedgerBackend> = Arc::new(MemoryLedger::default());
        let n1 = AnchoringService::with_dispatch(Arc::clone(&ledger), Dispatch::Manual);
        let n2 = AnchoringService::new(Arc::clone(&ledger));
        n1.create_anchor(&id).unwrap();
        n1.append_version(request(&seed, &id, "x", None, ExecutionMode::Optimistic))
            .unwrap();
        n1.append_version(request(&seed, &id, "x2", Some("x"), ExecutionMode::Optimistic))
            .unwrap();
        n2.append_version(request(&seed, &id, "y", None, ExecutionMode::Validated))
            .unwrap();
        let events = n1.reconcile(&id).unwrap();
        assert_eq!(events.len(), 2, "descendant of a loser is invalidated too");
        n1.dispatch_all();
        assert!(n1.reconcile(&id).unwrap().is_empty());
        assert_eq!(n1.pending_count(), 0);
    }

    #[test]
    fn pending_visible_only_with_flag_until_confirmed() {
        let (seed, id) = family(6);
        let chain = SimulatedChain::new(SimChainConfig::new(2_000, 1e6)).unwrap();
        let node = AnchoringService::new(Arc::new(chain));
        node.create_anchor(&id).unwrap();
        let start = Instant::now();
        let receipt = node
            .append_version(request(&seed, &id, "a", None, ExecutionMode::Optimistic))
            .unwrap();
        assert!(start.elapsed() < Duration::from_millis(100));
        assert_eq!(receipt.status, EntryStatus::PendingOptimistic);
        assert!(node.get_versions(&id, false).unwrap().is_empty());
        let pending = node.get_versions(&id, true).unwrap();
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].status, EntryStatus::PendingOptimistic);

        thread::sleep(Duration::from_millis(2_300));
        let confirmed = node.get_versions(&id, false).unwrap();
        assert_eq!(confirmed.len(), 1);
        assert_eq!(confirmed[0].status, EntryStatus::Confirmed);
        assert_eq!(node.pending_count(), 0);
    }

    #[test]
    fn unavailable_submission_is_retried_by_reconcile() {
        struct Flaky {
            inner: MemoryLedger,
            down: Mutex<bool>,
        }
        impl LedgerBackend for Flaky {
            fn create(&self, id: &AnchorId) -> Result<(), AnchorError> {
                self.inner.create(id)
            }
            fn submit(&self, id: &AnchorId, entry: AnchorEntry, prev: Option<HashLink>, done: super::super::Completion) {
                if *self.down.lock() {
                    done(Err(AnchorError::Unavailable("down".into())));
                } else {
                    self.inner.submit(id, entry, prev, done);
                }
            }
            fn history(&self, id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
                if *self.down.lock() {
                    return Err(AnchorError::Unavailable("down".into()));
                }
                self.inner.history(id)
            }
        }
        let (seed, id) = family(7);
        let flaky = Arc::new(Flaky {
            inner: MemoryLedger::default(),
            down: Mutex::new(false),
        });
        let node = AnchoringService::new(flaky.clone());
        node.create_anchor(&id).unwrap();
        *flaky.down.lock() = true;
        node.append_version(request(&seed, &id, "a", None, ExecutionMode::Optimistic))
            .unwrap();
        let err = node.reconcile(&id).unwrap_err();
        assert!(err.is_retryable());
        *flaky.down.lock() = false;
        assert!(node.reconcile(&id).unwrap().is_empty());
        assert_eq!(node.get_versions(&id, false).unwrap().len(), 1);
        let record = node.record(&id, false).unwrap();
        assert!(validate_history(&record).valid);
    }

    #[test]
    fn events_reach_subscribers() {
        let (seed, id) = family(8);
        let node = AnchoringService::new(Arc::new(MemoryLedger::default()));
        let events = node.subscribe();
        node.create_anchor(&id).unwrap();
        node.append_version(request(&seed, &id, "a", None, ExecutionMode::Optimistic))
            .unwrap();
        match events.recv_timeout(Duration::from_secs(1)).unwrap() {
            AnchorEvent::Confirmed { link: l, .. } => assert_eq!(l, link("a")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
