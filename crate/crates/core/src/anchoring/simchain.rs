//! A ledger that behaves like a slow, rate-limited blockchain.
//!
//! Writes enter a FIFO and are applied by one worker thread no earlier than
//! `latency_ms` after submission, drawing from a token bucket refilled at
//! `cap_tps`.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use super::ledger::{AnchorPolicy, Completion, LedgerBackend, LedgerEntry, LedgerState};
use super::types::{AnchorEntry, AnchorId, HashLink};
use super::AnchorError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimChainConfig {
    pub latency_ms: u64,
    pub cap_tps: f64,
    /// Bucket size. Defaults to `max(1, cap_tps / 50)`.
    #[serde(default)]
    pub burst: Option<u32>,
    /// Delay applied to history reads. Writes always pay `latency_ms`.
    #[serde(default)]
    pub read_latency_ms: u64,
    #[serde(default)]
    pub policy: AnchorPolicy,
}

impl SimChainConfig {
    pub fn new(latency_ms: u64, cap_tps: f64) -> SimChainConfig {
        SimChainConfig {
            latency_ms,
            cap_tps,
            burst: None,
            read_latency_ms: 0,
            policy: AnchorPolicy::Light,
        }
    }

    fn bucket_size(&self) -> f64 {
        self.burst
            .map_or((self.cap_tps / 50.0).max(1.0), |b| f64::from(b.max(1)))
    }
}

enum Op {
    Create(AnchorId, Box<dyn FnOnce(Result<(), AnchorError>) + Send>),
    Append {
        anchor_id: AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
        done: Completion,
    },
}

impl Op {
    fn fail(self, error: AnchorError) {
        match self {
            Op::Create(_, done) => done(Err(error)),
            Op::Append { done, .. } => done(Err(error)),
        }
    }
}

struct Queued {
    ready_at: Instant,
    op: Op,
}

struct Inner {
    state: LedgerState,
    queue: Mutex<VecDeque<Queued>>,
    wake: Condvar,
    stop: AtomicBool,
}

pub struct SimulatedChain {
    inner: Arc<Inner>,
    config: SimChainConfig,
}

impl SimulatedChain {
    pub fn new(config: SimChainConfig) -> Result<SimulatedChain, AnchorError> {
        if !(config.cap_tps.is_finite() && config.cap_tps > 0.0) {
            return Err(AnchorError::Validation(format!(
                "cap_tps must be a positive number, got {}",
                config.cap_tps
            )));
        }
        let inner = Arc::new(Inner {
            state: LedgerState::new(config.policy),
            queue: Mutex::default(),
            wake: Condvar::new(),
            stop: AtomicBool::new(false),
        });
        let worker = Arc::clone(&inner);
        let (rate, bucket) = (config.cap_tps, config.bucket_size());
        thread::Builder::new()
            .name("simchain".into())
            .spawn(move || run(worker, rate, bucket))
            .map_err(|e| AnchorError::Unavailable(e.to_string()))?;
        Ok(SimulatedChain { inner, config })
    }

    pub fn config(&self) -> &SimChainConfig {
        &self.config
    }

    /// Writes submitted but not yet applied.
    pub fn backlog(&self) -> usize {
        self.inner.queue.lock().len()
    }

    fn enqueue(&self, op: Op) {
        if self.inner.stop.load(Ordering::Acquire) {
            op.fail(AnchorError::Unavailable("simulated chain stopped".into()));
            return;
        }
        let ready_at = Instant::now() + Duration::from_millis(self.config.latency_ms);
        self.inner.queue.lock().push_back(Queued { ready_at, op });
        self.inner.wake.notify_one();
    }

    fn read_delay(&self) {
        if self.config.read_latency_ms > 0 {
            thread::sleep(Duration::from_millis(self.config.read_latency_ms));
        }
    }
}

impl Drop for SimulatedChain {
    fn drop(&mut self) {
        self.inner.stop.store(true, Ordering::Release);
        self.inner.wake.notify_all();
    }
}

fn run(inner: Arc<Inner>, rate: f64, bucket: f64) {
    let mut tokens = bucket;
    let mut refilled = Instant::now();
    loop {
        let next = {
            let mut queue = inner.queue.lock();
            loop {
                if inner.stop.load(Ordering::Acquire) {
                    break None;
                }
                let Some(front) = queue.front() else {
                    inner.wake.wait(&mut queue);
                    continue;
                };
                let now = Instant::now();
                if front.ready_at > now {
                    let until = front.ready_at;
                    inner.wake.wait_until(&mut queue, until);
                    continue;
                }
                tokens = (tokens + now.duration_since(refilled).as_secs_f64() * rate).min(bucket);
                refilled = now;
                if tokens >= 1.0 {
                    tokens -= 1.0;
                    break queue.pop_front();
                }
                let short = Duration::from_secs_f64((1.0 - tokens) / rate);
                inner.wake.wait_for(&mut queue, short);
            }
        };
        match next {
            Some(queued) => apply(&inner.state, queued.op),
            None => {
                let rest: Vec<Queued> = inner.queue.lock().drain(..).collect();
                for queued in rest {
                    queued
                        .op
                        .fail(AnchorError::Unavailable("simulated chain stopped".into()));
                }
                return;
            }
        }
    }
}

fn apply(state: &LedgerState, op: Op) {
    match op {
        Op::Create(anchor_id, done) => done(state.create(&anchor_id)),
        Op::Append {
            anchor_id,
            entry,
            expected_last,
            done,
        } => done(state.append(&anchor_id, &entry, expected_last.as_ref())),
    }
}

impl LedgerBackend for SimulatedChain {
    fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        let (tx, rx) = mpsc::sync_channel(1);
        self.enqueue(Op::Create(
            anchor_id.clone(),
            Box::new(move |result| {
                let _ = tx.send(result);
            }),
        ));
        rx.recv()
            .unwrap_or_else(|_| Err(AnchorError::Unavailable("simulated chain stopped".into())))
    }

    fn submit(
        &self,
        anchor_id: &AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
        done: Completion,
    ) {
        self.enqueue(Op::Append {
            anchor_id: anchor_id.clone(),
            entry,
            expected_last,
            done,
        });
    }

    fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
        self.read_delay();
        self.inner.state.history(anchor_id)
    }

    fn tail(&self, anchor_id: &AnchorId) -> Result<Option<HashLink>, AnchorError> {
        self.read_delay();
        self.inner.state.tail(anchor_id)
    }
}
