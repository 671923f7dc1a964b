//! Cross-module properties over random inputs.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use dsukit_core::anchoring::{
    validate_history, AnchorEntry, AnchorId, AnchorRecord, AnchoringService, AppendRequest,
    EntryStatus, ExecutionMode, HashLink, MemoryLedger, VersionEntry,
};
use dsukit_core::bdns::{BdnsTable, DomainEntry, Endpoint};
use dsukit_core::brickstore::{BrickHash, BrickStore, FsBrickStore, MemoryBrickStore};
use dsukit_core::dsu::{create_dsu, load_dsu, DsuError, ServiceLocator, StaticLocator};
use dsukit_core::keyssi::{derive, secret_ssi_from_entropy, seed_ssi_from_entropy, KeySsi};
use dsukit_core::messaging::{sign_take, unwrap_enc_ssi, wrap_enc_ssi, MessageQueues, MessagingError, Notifier};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

const DOMAIN: &str = "pharma";

fn seed(entropy: [u8; 32]) -> KeySsi {
    seed_ssi_from_entropy(DOMAIN, &entropy).unwrap()
}

fn link(n: u64) -> HashLink {
    HashLink::new(DOMAIN, &BrickHash::of(&n.to_le_bytes())).unwrap()
}

fn env() -> (Arc<dyn ServiceLocator>, Arc<AnchoringService>) {
    let anchors = AnchoringService::new(Arc::new(MemoryLedger::default()));
    let env: Arc<dyn ServiceLocator> =
        Arc::new(StaticLocator::new(Arc::new(MemoryBrickStore::default()), anchors.clone()));
    (env, anchors)
}

/// Appends `links` in order as a single writer and returns the confirmed history.
fn single_writer(mode: ExecutionMode, owner: &KeySsi, links: &[HashLink]) -> Vec<HashLink> {
    let service = AnchoringService::new(Arc::new(MemoryLedger::default()));
    let id = AnchorId::for_family(owner).unwrap();
    service.create_anchor(&id).unwrap();
    let mut prev = None;
    for l in links {
        let req = AppendRequest::signed(owner, id.clone(), l.clone(), prev.clone(), mode).unwrap();
        service.append_version(req).unwrap();
        prev = Some(l.clone());
    }
    assert!(service.reconcile(&id).unwrap().is_empty());
    assert_eq!(service.invalidated_count(), 0);
    service.get_versions(&id, false).unwrap().into_iter().map(|v| v.link).collect()
}

fn record(owner: &KeySsi, n: u64) -> AnchorRecord {
    let id = AnchorId::for_family(owner).unwrap();
    let mut prev = None;
    let history = (0..n)
        .map(|i| {
            let req =
                AppendRequest::signed(owner, id.clone(), link(i), prev.clone(), ExecutionMode::Validated).unwrap();
            prev = Some(link(i));
            VersionEntry {
                link: req.new_link,
                signature: req.signature,
                status: EntryStatus::Confirmed,
                timestamp: None,
            }
        })
        .collect();
    AnchorRecord { anchor_id: id, history }
}

fn files() -> impl Strategy<Value = BTreeMap<String, Vec<u8>>> {
    prop::collection::btree_map(
        "/[a-z]{1,6}(/[a-z]{1,6}){0,2}\\.[a-z]{1,3}",
        prop::collection::vec(any::<u8>(), 0..2048),
        1..8,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bricks_are_content_addressed(data in prop::collection::vec(any::<u8>(), 0..4096)) {
        let dir = tempfile::tempdir().unwrap();
        let stores: [Box<dyn BrickStore>; 2] = [
            Box::new(MemoryBrickStore::default()),
            Box::new(FsBrickStore::open(dir.path()).unwrap()),
        ];
        for store in stores {
            let h = store.put_brick(DOMAIN, &data).unwrap();
            prop_assert_eq!(h.as_bytes(), &<[u8; 32]>::from(Sha256::digest(&data)));
            prop_assert_eq!(store.put_brick(DOMAIN, &data).unwrap(), h);
            prop_assert_eq!(store.get_brick(DOMAIN, &h).unwrap(), data.clone());
        }
    }

    #[test]
    fn optimistic_equals_validated_for_single_writer(entropy in any::<[u8; 32]>(), n in 1u64..8) {
        let owner = seed(entropy);
        let links: Vec<HashLink> = (0..n).map(link).collect();
        let validated = single_writer(ExecutionMode::Validated, &owner, &links);
        let optimistic = single_writer(ExecutionMode::Optimistic, &owner, &links);
        prop_assert_eq!(&validated, &links);
        prop_assert_eq!(optimistic, validated);
    }

    #[test]
    fn prefixes_validate_and_mutations_are_caught(
        entropy in any::<[u8; 32]>(),
        n in 2u64..5,
        pick in any::<prop::sample::Index>(),
        byte in any::<prop::sample::Index>(),
        mask in 1u8..=255,
    ) {
        let owner = seed(entropy);
        let full = record(&owner, n);
        for k in 0..=full.history.len() {
            let prefix = AnchorRecord { anchor_id: full.anchor_id.clone(), history: full.history[..k].to_vec() };
            prop_assert!(validate_history(&prefix).valid);
        }
        let target = pick.index(full.history.len() - 1);
        let mut bytes = serde_json::to_vec(&full.history[target].entry()).unwrap();
        let at = byte.index(bytes.len());
        bytes[at] ^= mask;
        if let Ok(mutated) = serde_json::from_slice::<AnchorEntry>(&bytes) {
            let mut tampered = full.clone();
            tampered.history[target].link = mutated.link;
            tampered.history[target].signature = mutated.signature;
            prop_assert!(!validate_history(&tampered).valid);
        }
    }

    #[test]
    fn dsu_round_trip_and_version_immutability(entropy in any::<[u8; 32]>(), v1 in files(), v2 in files()) {
        let (env, _) = env();
        let owner = seed(entropy);
        let mut dsu = create_dsu(&env, &owner).unwrap();
        for (p, d) in &v1 {
            dsu.write_file(p, d).unwrap();
        }
        let first = dsu.commit(ExecutionMode::Validated).unwrap();
        for p in v1.keys() {
            dsu.delete(p).unwrap();
        }
        for (p, d) in &v2 {
            dsu.write_file(p, d).unwrap();
        }
        let second = dsu.commit(ExecutionMode::Optimistic);
        let sread = derive(&owner).unwrap();
        prop_assert_eq!(load_dsu(&env, &sread, Some(&first)).unwrap().snapshot().unwrap(), v1.clone());
        match second {
            Ok(second) => prop_assert_eq!(load_dsu(&env, &sread, Some(&second)).unwrap().snapshot().unwrap(), v2),
            Err(DsuError::NoChanges) => prop_assert_eq!(&v1, &v2),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn mounts_are_transparent(a in any::<[u8; 32]>(), b in any::<[u8; 32]>(), inner in files()) {
        prop_assume!(a != b);
        let (env, _) = env();
        let mut child = create_dsu(&env, &seed(b)).unwrap();
        for (p, d) in &inner {
            child.write_file(p, d).unwrap();
        }
        child.commit(ExecutionMode::Validated).unwrap();
        let mut parent = create_dsu(&env, &seed(a)).unwrap();
        parent.mount("/m", derive(&seed(b)).unwrap()).unwrap();
        parent.write_file("/own", b"x").unwrap();
        parent.commit(ExecutionMode::Validated).unwrap();
        let reader = load_dsu(&env, &derive(&seed(a)).unwrap(), None).unwrap();
        let direct = load_dsu(&env, &derive(&seed(b)).unwrap(), None).unwrap();
        for p in inner.keys() {
            prop_assert_eq!(reader.read_file(&format!("/m{p}")).unwrap(), direct.read_file(p).unwrap());
        }
    }

    #[test]
    fn bdns_specific_entries_leave_siblings_alone(
        labels in prop::collection::vec("[a-z]{1,5}", 2..5),
        sibling in "[A-Z]{1,5}",
    ) {
        let root = labels.last().unwrap().clone();
        let full = labels.join(".");
        let parent = labels[1..].join(".");
        let sib = format!("{sibling}.{parent}");
        let ep = |s: &str| Endpoint::parse(&format!("http://{s}.example")).unwrap();
        let mut table = BdnsTable::default();
        table.insert(&root, DomainEntry {
            anchoring_services: Some(vec![ep("a")]),
            brick_storages: Some(vec![ep("b")]),
            ..DomainEntry::default()
        }).unwrap();
        let before = table.resolve(&sib).unwrap();
        prop_assert_eq!(table.resolve(&sib).unwrap(), before.clone());
        table.insert(&full, DomainEntry { brick_storages: Some(vec![ep("c")]), ..DomainEntry::default() }).unwrap();
        prop_assert_eq!(table.resolve(&sib).unwrap(), before);
        let specific = table.resolve(&full).unwrap();
        prop_assert_eq!(specific.brick_storages, vec![ep("c")]);
        prop_assert_eq!(specific.anchoring_services, vec![ep("a")]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn put_is_open_take_needs_the_channel_key(
        owner_entropy in any::<[u8; 32]>(),
        others in prop::collection::vec((any::<bool>(), any::<[u8; 32]>(), 0usize..5), 1..6),
    ) {
        let (_, anchors) = env();
        let owner = seed(owner_entropy);
        let id = AnchorId::for_family(&owner).unwrap();
        anchors.create_anchor(&id).unwrap();
        let mq = MessageQueues::new(anchors);
        for (secret, entropy, depth) in others {
            prop_assume!(entropy != owner_entropy);
            let mut k = if secret {
                secret_ssi_from_entropy(DOMAIN, &entropy).unwrap()
            } else {
                seed(entropy)
            };
            for _ in 0..depth {
                k = derive(&k).unwrap_or(k);
            }
            mq.put(&id, entropy.to_vec()).unwrap();
            let nonce = mq.issue_nonce(&id).unwrap();
            match sign_take(&k, &id, &nonce) {
                Ok(sig) => prop_assert!(matches!(mq.take(&id, &nonce, &sig), Err(MessagingError::Auth(_)))),
                Err(_) => prop_assert!(!k.grants(dsukit_core::AccessLevel::Anchor)),
            }
        }
        let nonce = mq.issue_nonce(&id).unwrap();
        prop_assert!(mq.take(&id, &nonce, &sign_take(&owner, &id, &nonce).unwrap()).unwrap().is_some());
    }

    #[test]
    fn notifications_equal_history_suffix(entropy in any::<[u8; 32]>(), n in 1u64..6, cursor in 0u64..6) {
        let (_, anchors) = env();
        let owner = seed(entropy);
        let id = AnchorId::for_family(&owner).unwrap();
        anchors.create_anchor(&id).unwrap();
        let mut prev = None;
        for i in 0..n {
            let req = AppendRequest::signed(&owner, id.clone(), link(i), prev, ExecutionMode::Validated).unwrap();
            anchors.append_version(req).unwrap();
            prev = Some(link(i));
        }
        let notifier = Notifier::new(anchors);
        let after = (cursor < n).then(|| link(cursor));
        let got = notifier.poll(&id, after.as_ref(), Duration::from_millis(1)).unwrap();
        let start = after.map_or(0, |_| cursor + 1);
        prop_assert_eq!(got, (start..n).map(link).collect::<Vec<_>>());
    }
}

#[test]
fn wrapped_sread_opens_the_dsu_for_the_recipient() {
    let (env, _) = env();
    let alice = seed([1; 32]);
    let bob = secret_ssi_from_entropy(DOMAIN, &[2; 32]).unwrap();
    let mut dsu = create_dsu(&env, &alice).unwrap();
    dsu.write_file("/leaflet.txt", b"take twice daily").unwrap();
    dsu.commit(ExecutionMode::Validated).unwrap();

    let bob_public = derive(&derive(&derive(&bob).unwrap()).unwrap()).unwrap();
    let wire = wrap_enc_ssi(&derive(&alice).unwrap(), &bob_public).unwrap().serialize();
    let received = unwrap_enc_ssi(&bob, &KeySsi::parse(&wire).unwrap()).unwrap();
    let opened = load_dsu(&env, &received, None).unwrap();
    assert_eq!(opened.read_file("/leaflet.txt").unwrap(), b"take twice daily");
    assert!(unwrap_enc_ssi(&alice, &KeySsi::parse(&wire).unwrap()).is_err());
}
