//! Message queues named by AnchorIds. Anyone may put; only a holder of the
//! channel's signing key may take.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::MessagingError;
use crate::anchoring::{now_millis, AnchorClient, AnchorId};
use crate::crypto::b64;
use crate::keyssi::{sign, verify, KeySsi, KeySsiError, Signature};

pub const DEFAULT_QUEUE_CAPACITY: usize = 10_000;
pub const NONCE_TTL: Duration = Duration::from_secs(60);
const NONCE_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqMessage {
    pub id: String,
    #[serde(with = "b64_bytes")]
    pub payload: Vec<u8>,
    pub enqueued_at: u64,
}

mod b64_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::crypto::b64(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        crate::crypto::unb64(&text).ok_or_else(|| D::Error::custom("invalid base64url payload"))
    }
}

/// The bytes a consumer signs to take from `channel` with `nonce`.
pub fn take_payload(channel: &AnchorId, nonce: &str) -> Vec<u8> {
    format!("mq-take\n{channel}\n{nonce}").into_bytes()
}

/// Answers a take challenge. Needs Anchor rank or above.
pub fn sign_take(owner: &KeySsi, channel: &AnchorId, nonce: &str) -> Result<Signature, KeySsiError> {
    sign(owner, &take_payload(channel, nonce))
}

struct Channel {
    queue: VecDeque<MqMessage>,
}

struct Nonce {
    channel: AnchorId,
    expires: Instant,
}

/// In-memory queues for one blockchain domain.
pub struct MessageQueues {
    anchors: Arc<dyn AnchorClient>,
    capacity: usize,
    known: Mutex<HashSet<AnchorId>>,
    channels: Mutex<HashMap<AnchorId, Arc<Mutex<Channel>>>>,
    nonces: Mutex<HashMap<String, Nonce>>,
}

impl MessageQueues {
    pub fn new(anchors: Arc<dyn AnchorClient>) -> MessageQueues {
        MessageQueues::with_capacity(anchors, DEFAULT_QUEUE_CAPACITY)
    }

    pub fn with_capacity(anchors: Arc<dyn AnchorClient>, capacity: usize) -> MessageQueues {
        MessageQueues {
            anchors,
            capacity,
            known: Mutex::new(HashSet::new()),
            channels: Mutex::new(HashMap::new()),
            nonces: Mutex::new(HashMap::new()),
        }
    }

    fn channel(&self, id: &AnchorId) -> Result<Arc<Mutex<Channel>>, MessagingError> {
        if !self.known.lock().contains(id) {
            self.anchors.get_versions(id, true)?;
            self.known.lock().insert(id.clone());
        }
        let mut channels = self.channels.lock();
        Ok(Arc::clone(channels.entry(id.clone()).or_insert_with(|| {
            Arc::new(Mutex::new(Channel {
                queue: VecDeque::new(),
            }))
        })))
    }

    /// Enqueues `payload`; no credentials required.
    pub fn put(&self, id: &AnchorId, payload: Vec<u8>) -> Result<String, MessagingError> {
        let channel = self.channel(id)?;
        let mut channel = channel.lock();
        if channel.queue.len() >= self.capacity {
            return Err(MessagingError::Backpressure {
                channel: id.to_string(),
                capacity: self.capacity,
            });
        }
        let mut raw = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut raw);
        let message_id = hex::encode(raw);
        channel.queue.push_back(MqMessage {
            id: message_id.clone(),
            payload,
            enqueued_at: now_millis(),
        });
        Ok(message_id)
    }

    pub fn depth(&self, id: &AnchorId) -> usize {
        self.channels.lock().get(id).map_or(0, |c| c.lock().queue.len())
    }

    /// A single-use challenge for taking from `id`.
    pub fn issue_nonce(&self, id: &AnchorId) -> Result<String, MessagingError> {
        self.channel(id)?;
        let mut raw = [0u8; NONCE_LEN];
        rand::thread_rng().fill_bytes(&mut raw);
        let nonce = b64(&raw);
        let now = Instant::now();
        let mut nonces = self.nonces.lock();
        nonces.retain(|_, n| n.expires > now);
        nonces.insert(
            nonce.clone(),
            Nonce {
                channel: id.clone(),
                expires: now + NONCE_TTL,
            },
        );
        Ok(nonce)
    }

    /// Removes and returns the oldest message, `None` when the queue is empty.
    /// The nonce is spent whether or not the signature checks out.
    pub fn take(
        &self,
        id: &AnchorId,
        nonce: &str,
        signature: &Signature,
    ) -> Result<Option<MqMessage>, MessagingError> {
        let issued = self.nonces.lock().remove(nonce);
        match issued {
            Some(n) if n.channel == *id && n.expires > Instant::now() => {}
            Some(_) => return Err(MessagingError::Auth("nonce expired or issued for another channel".into())),
            None => return Err(MessagingError::Auth("unknown or already used nonce".into())),
        }
        if !verify(id.as_ssi(), &take_payload(id, nonce), signature) {
            return Err(MessagingError::Auth("signature does not match the channel key".into()));
        }
        let channel = self.channel(id)?;
        let message = channel.lock().queue.pop_front();
        Ok(message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchoring::{AnchoringService, MemoryLedger};
    use crate::keyssi::{derive, seed_ssi_from_entropy};

    fn setup(capacity: usize) -> (MessageQueues, KeySsi, AnchorId) {
        let service = AnchoringService::new(Arc::new(MemoryLedger::default()));
        let owner = seed_ssi_from_entropy("d", &[7; 32]).unwrap();
        let id = AnchorId::for_family(&owner).unwrap();
        service.create_anchor(&id).unwrap();
        (MessageQueues::with_capacity(service, capacity), owner, id)
    }

    fn take(mq: &MessageQueues, owner: &KeySsi, id: &AnchorId) -> Result<Option<MqMessage>, MessagingError> {
        let nonce = mq.issue_nonce(id)?;
        mq.take(id, &nonce, &sign_take(owner, id, &nonce).unwrap())
    }

    #[test]
    fn fifo_and_empty() {
        let (mq, owner, id) = setup(DEFAULT_QUEUE_CAPACITY);
        for p in [b"a", b"b", b"c"] {
            mq.put(&id, p.to_vec()).unwrap();
        }
        for p in [b"a", b"b", b"c"] {
            assert_eq!(take(&mq, &owner, &id).unwrap().unwrap().payload, p);
        }
        assert!(take(&mq, &owner, &id).unwrap().is_none());
    }

    #[test]
    fn unknown_channel_is_not_found() {
        let (mq, _, _) = setup(4);
        let other = AnchorId::for_family(&seed_ssi_from_entropy("d", &[8; 32]).unwrap()).unwrap();
        assert!(matches!(mq.put(&other, vec![1]), Err(MessagingError::NotFound(_))));
    }

    #[test]
    fn backpressure_after_capacity() {
        let (mq, owner, id) = setup(DEFAULT_QUEUE_CAPACITY);
        for i in 0..DEFAULT_QUEUE_CAPACITY {
            mq.put(&id, i.to_le_bytes().to_vec()).unwrap();
        }
        assert!(matches!(mq.put(&id, vec![]), Err(MessagingError::Backpressure { .. })));
        assert_eq!(take(&mq, &owner, &id).unwrap().unwrap().payload, 0usize.to_le_bytes());
        mq.put(&id, vec![]).unwrap();
    }

    #[test]
    fn foreign_key_replay_and_read_rank_rejected() {
        let (mq, owner, id) = setup(8);
        mq.put(&id, b"m".to_vec()).unwrap();
        let stranger = seed_ssi_from_entropy("d", &[9; 32]).unwrap();
        assert!(matches!(take(&mq, &stranger, &id), Err(MessagingError::Auth(_))));
        assert!(sign_take(&derive(&owner).unwrap(), &id, "n").is_err());

        let nonce = mq.issue_nonce(&id).unwrap();
        let sig = sign_take(&owner, &id, &nonce).unwrap();
        assert!(mq.take(&id, &nonce, &sig).unwrap().is_some());
        assert!(matches!(mq.take(&id, &nonce, &sig), Err(MessagingError::Auth(_))));
    }

    #[test]
    fn concurrent_takes_deliver_each_message_once() {
        let (mq, owner, id) = setup(DEFAULT_QUEUE_CAPACITY);
        for i in 0..100u32 {
            mq.put(&id, i.to_le_bytes().to_vec()).unwrap();
        }
        let (a, b) = std::thread::scope(|s| {
            let run = || {
                s.spawn(|| {
                    let mut got = Vec::new();
                    while let Some(m) = take(&mq, &owner, &id).unwrap() {
                        got.push(m.id);
                    }
                    got
                })
            };
            let (ha, hb) = (run(), run());
            (ha.join().unwrap(), hb.join().unwrap())
        });
        let sa: HashSet<_> = a.iter().collect();
        let sb: HashSet<_> = b.iter().collect();
        assert_eq!(sa.len() + sb.len(), 100);
        assert!(sa.is_disjoint(&sb));
    }

    #[test]
    fn message_json_uses_base64() {
        let m = MqMessage {
            id: "x".into(),
            payload: vec![0xff, 0],
            enqueued_at: 1,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"_wA\""));
        assert_eq!(serde_json::from_str::<MqMessage>(&json).unwrap(), m);
    }
}
