use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use dsukit_core::anchoring::{AnchorId, AnchoringService, AppendRequest, ExecutionMode, HashLink, MemoryLedger};
use dsukit_core::brickstore::BrickHash;
use dsukit_core::crypto::{random_key, seal};
use dsukit_core::keyssi::{derive, seed_ssi_from_entropy, KeySsi};

fn keyssi(c: &mut Criterion) {
    let seed = seed_ssi_from_entropy("bench", &[3; 32]).unwrap();
    let text = seed.serialize();
    c.bench_function("keyssi/parse", |b| b.iter(|| KeySsi::parse(black_box(&text)).unwrap()));
    c.bench_function("keyssi/derive", |b| b.iter(|| derive(black_box(&seed)).unwrap()));
}

fn sealing(c: &mut Criterion) {
    let key = random_key();
    let data = vec![7u8; 64 * 1024];
    let mut g = c.benchmark_group("seal");
    g.throughput(Throughput::Bytes(data.len() as u64));
    g.bench_function("64KiB", |b| b.iter(|| seal(&key, black_box(&data))));
    g.finish();
}

fn anchoring(c: &mut Criterion) {
    for mode in [ExecutionMode::Validated, ExecutionMode::Optimistic] {
        c.bench_function(&format!("anchor/append/{mode}"), |b| {
            b.iter_batched(
                || {
                    let service = AnchoringService::new(Arc::new(MemoryLedger::default()));
                    let seed = seed_ssi_from_entropy("bench", &[5; 32]).unwrap();
                    let id = AnchorId::for_family(&seed).unwrap();
                    service.create_anchor(&id).unwrap();
                    let link = HashLink::new("bench", &BrickHash::of(b"v1")).unwrap();
                    let req = AppendRequest::signed(&seed, id, link, None, mode).unwrap();
                    (service, req)
                },
                |(service, req)| service.append_version(req).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, keyssi, sealing, anchoring);
criterion_main!(benches);
