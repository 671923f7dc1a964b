//! Anchoring workload driver.
//!
//! `W` single-anchor writers each own a DSU and commit a small file against a
//! simulated chain, either as fast as they can or paced so that the fleet
//! offers a fixed transaction rate. The operation schedule is a pure function
//! of the parameters and the seed; only timings vary between runs.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Barrier, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use dsukit_core::anchoring::{AnchorEvent, AnchoringService, ExecutionMode, SimChainConfig, SimulatedChain};
use dsukit_core::brickstore::MemoryBrickStore;
use dsukit_core::dsu::{create_dsu, DsuError, ServiceLocator, StaticLocator};
use dsukit_core::keyssi::{seed_ssi_from_entropy, KeySsi, ENTROPY_LEN};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BENCH_DOMAIN: &str = "bench";
const STATE_PATH: &str = "/state";
/// Paced issue happens in ticks of roughly this length.
const TICK: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("setup failed: {0}")]
    Setup(#[from] DsuError),
    #[error("simulated chain: {0}")]
    Chain(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchParams {
    /// Sequential commits per writer.
    pub calls: usize,
    pub writers: usize,
    pub latency_ms: u64,
    pub cap_tps: f64,
    pub mode: ExecutionMode,
    pub seed: u64,
    /// Offered load. `None` runs closed loop.
    pub rate_tps: Option<f64>,
    pub payload_bytes: usize,
    /// Wait for outstanding optimistic entries to settle before reporting.
    pub drain: bool,
    pub drain_timeout: Duration,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            calls: 3,
            writers: 1,
            latency_ms: 2000,
            cap_tps: 300.0,
            mode: ExecutionMode::Validated,
            seed: 0,
            rate_tps: None,
            payload_bytes: 64,
            drain: true,
            drain_timeout: Duration::from_secs(60),
        }
    }
}

impl BenchParams {
    pub fn total_calls(&self) -> usize {
        self.calls * self.writers
    }

    fn check(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Params(m.to_owned()));
        if self.writers == 0 {
            return bad("writers must be at least 1");
        }
        if self.calls == 0 {
            return bad("calls must be at least 1");
        }
        if self.payload_bytes < 8 {
            return bad("payload must be at least 8 bytes");
        }
        if !(self.cap_tps.is_finite() && self.cap_tps > 0.0) {
            return bad("cap must be a positive rate");
        }
        if self.rate_tps.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
            return bad("rate must be a positive rate");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub mode: ExecutionMode,
    pub writers: usize,
    pub calls: usize,
    pub total_calls: usize,
    pub acked: usize,
    pub errors: usize,
    /// From the first issue to the last acknowledgement.
    pub elapsed_ms: f64,
    pub ack_rate_tps: f64,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
    pub latency_max_ms: f64,
    pub confirmed: usize,
    /// Steady-state rate between the first and last observed confirmation.
    pub confirmed_tps: f64,
    pub invalidations: usize,
    pub pending_at_end: usize,
    /// Digest of the operation schedule.
    pub schedule_digest: String,
}

/// One planned commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedOp {
    pub index: usize,
    pub writer: usize,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub writer_entropy: Vec<[u8; ENTROPY_LEN]>,
    pub ops: Vec<PlannedOp>,
}

impl Schedule {
    pub fn plan(params: &BenchParams) -> Schedule {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let writer_entropy = (0..params.writers)
            .map(|_| {
                let mut e = [0u8; ENTROPY_LEN];
                rng.fill_bytes(&mut e);
                e
            })
            .collect();
        let ops = (0..params.total_calls())
            .map(|index| {
                // The index prefix keeps consecutive payloads distinct.
                let mut payload = (index as u64).to_be_bytes().to_vec();
                let mut body = vec![0u8; params.payload_bytes.saturating_sub(8)];
                rng.fill_bytes(&mut body);
                payload.extend_from_slice(&body);
                PlannedOp {
                    index,
                    writer: index % params.writers,
                    payload,
                }
            })
            .collect();
        Schedule { writer_entropy, ops }
    }

    pub fn digest(&self, params: &BenchParams) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|{:?}|{:?}|", params.mode, params.rate_tps, params.writers));
        for e in &self.writer_entropy {
            h.update(e);
        }
        for op in &self.ops {
            h.update((op.index as u64).to_be_bytes());
            h.update((op.writer as u64).to_be_bytes());
            h.update(&op.payload);
        }
        hex::encode(h.finalize())
    }

    /// Offset from the start at which op `index` is issued.
    fn issue_offset(rate_tps: Option<f64>, index: usize) -> Duration {
        let Some(rate) = rate_tps else {
            return Duration::ZERO;
        };
        let per_tick = (rate * TICK.as_secs_f64()).ceil().max(1.0);
        let tick = per_tick / rate;
        Duration::from_secs_f64((index as f64 / per_tick).floor() * tick)
    }
}

struct WriterResult {
    latencies: Vec<Duration>,
    last_ack: Option<Instant>,
    errors: usize,
}

pub fn run_anchoring_bench(params: &BenchParams) -> Result<BenchReport, BenchError> {
    params.check()?;
    let schedule = Schedule::plan(params);
    let schedule_digest = schedule.digest(params);

    let chain_cfg = SimChainConfig::new(params.latency_ms, params.cap_tps);
    let chain = Arc::new(SimulatedChain::new(chain_cfg).map_err(|e| BenchError::Chain(e.to_string()))?);
    let service = AnchoringService::new(chain);
    let env: Arc<dyn ServiceLocator> = Arc::new(StaticLocator::new(
        Arc::new(MemoryBrickStore::default()),
        service.clone(),
    ));

    let seeds: Vec<KeySsi> = schedule
        .writer_entropy
        .iter()
        .map(|e| seed_ssi_from_entropy(BENCH_DOMAIN, e))
        .collect::<Result<_, _>>()
        .map_err(DsuError::from)?;

    let events = service.subscribe();
    let stop = Arc::new(AtomicBool::new(false));
    let collector = spawn_collector(events, Arc::clone(&stop));

    let mut per_writer: Vec<Vec<PlannedOp>> = vec![Vec::new(); params.writers];
    for op in schedule.ops {
        per_writer[op.writer].push(op);
    }

    let barrier = Arc::new(Barrier::new(params.writers + 1));
    let start_at = Arc::new(OnceLock::<Instant>::new());
    let mut handles = Vec::new();
    for (seed, ops) in seeds.into_iter().zip(per_writer) {
        let env = Arc::clone(&env);
        let barrier = Arc::clone(&barrier);
        let start_at = Arc::clone(&start_at);
        let mode = params.mode;
        let rate = params.rate_tps;
        handles.push(thread::spawn(move || -> Result<WriterResult, DsuError> {
            // Anchor creation pays chain latency; keep it out of the timed phase.
            let created = create_dsu(&env, &seed);
            barrier.wait();
            barrier.wait();
            let mut dsu = created?;
            let start = *start_at.get().expect("start is set between the barriers");
            let mut result = WriterResult {
                latencies: Vec::with_capacity(ops.len()),
                last_ack: None,
                errors: 0,
            };
            for op in ops {
                let due = start + Schedule::issue_offset(rate, op.index);
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
                let issued = Instant::now();
                let outcome = dsu
                    .write_file(STATE_PATH, &op.payload)
                    .and_then(|_| dsu.commit(mode));
                let acked = Instant::now();
                match outcome {
                    Ok(_) => {
                        result.latencies.push(acked - issued);
                        result.last_ack = Some(acked);
                    }
                    Err(_) => result.errors += 1,
                }
            }
            Ok(result)
        }));
    }

    barrier.wait();
    let start = *start_at.get_or_init(Instant::now);
    barrier.wait();

    let mut latencies = Vec::new();
    let mut last_ack = None;
    let mut errors = 0;
    let mut setup_error = None;
    for h in handles {
        match h.join().expect("writer thread panicked") {
            Ok(r) => {
                latencies.extend(r.latencies);
                errors += r.errors;
                last_ack = last_ack.max(r.last_ack);
            }
            Err(e) => setup_error = Some(e),
        }
    }
    if let Some(e) = setup_error {
        stop.store(true, Ordering::Release);
        let _ = collector.join();
        return Err(BenchError::Setup(e));
    }

    if params.drain {
        let deadline = Instant::now() + params.drain_timeout;
        while service.pending_count() > 0 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
    }
    stop.store(true, Ordering::Release);
    let confirmations = collector.join().expect("collector thread panicked");

    let acked = latencies.len();
    let elapsed = last_ack.map_or(Duration::ZERO, |t| t - start);
    latencies.sort();
    let ms = |d: Duration| d.as_secs_f64() * 1000.0;
    let confirmed_tps = match (confirmations.first(), confirmations.last()) {
        (Some(first), Some(last)) if confirmations.len() > 1 && last > first => {
            (confirmations.len() - 1) as f64 / (*last - *first).as_secs_f64()
        }
        _ => 0.0,
    };

    Ok(BenchReport {
        mode: params.mode,
        writers: params.writers,
        calls: params.calls,
        total_calls: params.total_calls(),
        acked,
        errors,
        elapsed_ms: ms(elapsed),
        ack_rate_tps: if elapsed.is_zero() {
            0.0
        } else {
            acked as f64 / elapsed.as_secs_f64()
        },
        latency_p50_ms: percentile(&latencies, 0.50).map_or(0.0, ms),
        latency_p95_ms: percentile(&latencies, 0.95).map_or(0.0, ms),
        latency_max_ms: latencies.last().copied().map_or(0.0, ms),
        confirmed: confirmations.len(),
        confirmed_tps,
        invalidations: service.invalidated_count(),
        pending_at_end: service.pending_count(),
        schedule_digest,
    })
}

fn spawn_collector(events: mpsc::Receiver<AnchorEvent>, stop: Arc<AtomicBool>) -> thread::JoinHandle<Vec<Instant>> {
    thread::spawn(move || {
        let mut seen = Vec::new();
        while !stop.load(Ordering::Acquire) {
            match events.recv_timeout(Duration::from_millis(5)) {
                Ok(AnchorEvent::Confirmed { .. }) => seen.push(Instant::now()),
                Ok(AnchorEvent::Invalidated(_)) => {}
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        }
        seen
    })
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Duration], q: f64) -> Option<Duration> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}
