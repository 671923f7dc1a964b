//! Blocking HTTP clients for a hub's endpoints. They implement the core
//! service traits, so a DSU can run against a remote hub unchanged.

use std::collections::HashMap;
use std::io::Read;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use dsukit_core::anchoring::{
    AnchorClient, AnchorEntry, AnchorError, AnchorId, AppendReceipt, AppendRequest, Completion, HashLink,
    LedgerBackend, LedgerEntry, LedgerReceipt, VersionEntry,
};
use dsukit_core::bdns::{Bdns, BdnsTable};
use dsukit_core::brickstore::{verify_brick, BrickError, BrickHash, BrickStore};
use dsukit_core::dsu::{DsuError, ServiceLocator};
use dsukit_core::keyssi::{KeySsi, Signature};
use dsukit_core::messaging::{sign_take, MessagingError, MqMessage};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::server::{Ready, SubmitBody, TakeBody};
use crate::wire::{ApiError, ErrorBody};

#[derive(Debug)]
enum CallError {
    Api(ApiError),
    Transport(String),
}

impl CallError {
    fn anchor(self) -> AnchorError {
        match self {
            CallError::Api(e) => e.into_anchor_error(),
            CallError::Transport(m) => AnchorError::Unavailable(m),
        }
    }

    fn brick(self, hash: Option<BrickHash>) -> BrickError {
        match self {
            CallError::Api(e) => e.into_brick_error(hash),
            CallError::Transport(m) => BrickError::Unavailable(m),
        }
    }

    fn messaging(self) -> MessagingError {
        match self {
            CallError::Api(e) => e.into_messaging_error(),
            CallError::Transport(m) => MessagingError::Anchor(AnchorError::Unavailable(m)),
        }
    }
}

/// Shared plumbing: one agent, one base URL.
#[derive(Clone)]
struct Http {
    agent: ureq::Agent,
    base: String,
}

enum Body<'a> {
    Empty,
    Bytes(&'a [u8]),
    Json(Value),
}

impl Http {
    fn new(base: &str, read_timeout: Duration) -> Http {
        Http {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(5))
                .timeout_read(read_timeout)
                .build(),
            base: base.trim_end_matches('/').to_owned(),
        }
    }

    fn call(&self, method: &str, path: &str, body: Body<'_>) -> Result<ureq::Response, CallError> {
        let req = self.agent.request(method, &format!("{}{path}", self.base));
        let result = match body {
            Body::Empty => req.call(),
            Body::Bytes(b) => req.set("content-type", "application/octet-stream").send_bytes(b),
            Body::Json(v) => req
                .set("content-type", "application/json")
                .send_string(&v.to_string()),
        };
        match result {
            Ok(resp) => Ok(resp),
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let body = serde_json::from_str::<ErrorBody>(&text).unwrap_or_else(|_| ErrorBody {
                    code: "http".into(),
                    message: text,
                    field: None,
                    detail: None,
                });
                Err(CallError::Api(ApiError { status, body }))
            }
            Err(e) => Err(CallError::Transport(e.to_string())),
        }
    }

    fn json<T: DeserializeOwned>(&self, method: &str, path: &str, body: Body<'_>) -> Result<T, CallError> {
        let resp = self.call(method, path, body)?;
        let text = resp
            .into_string()
            .map_err(|e| CallError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CallError::Transport(format!("bad response from {path}: {e}")))
    }
}

const DEFAULT_READ_TIMEOUT: Duration = Duration::from_secs(60);

/// A hub's bricking endpoints as a [`BrickStore`]. Downloads are verified
/// against their hash before being returned.
pub struct RemoteBrickStore {
    http: Http,
}

impl RemoteBrickStore {
    pub fn new(base: &str) -> RemoteBrickStore {
        RemoteBrickStore {
            http: Http::new(base, DEFAULT_READ_TIMEOUT),
        }
    }
}

#[derive(Deserialize)]
struct HashReply {
    hash: String,
}

impl BrickStore for RemoteBrickStore {
    fn put_brick(&self, domain: &str, ciphertext: &[u8]) -> Result<BrickHash, BrickError> {
        let reply: HashReply = self
            .http
            .json("PUT", &format!("/bricking/{domain}/put"), Body::Bytes(ciphertext))
            .map_err(|e| e.brick(None))?;
        let hash = BrickHash::parse(&reply.hash)?;
        if !verify_brick(&hash, ciphertext) {
            return Err(BrickError::Unavailable(format!("server answered with a foreign hash {hash}")));
        }
        Ok(hash)
    }

    fn get_brick(&self, domain: &str, hash: &BrickHash) -> Result<Vec<u8>, BrickError> {
        let resp = self
            .http
            .call("GET", &format!("/bricking/{domain}/get/{hash}"), Body::Empty)
            .map_err(|e| e.brick(Some(*hash)))?;
        let mut data = Vec::new();
        resp.into_reader()
            .take(dsukit_core::brickstore::MAX_BRICK_SIZE as u64 + 1)
            .read_to_end(&mut data)?;
        if !verify_brick(hash, &data) {
            return Err(BrickError::Corrupted(*hash));
        }
        Ok(data)
    }
}

/// A hub's anchoring endpoints as an [`AnchorClient`].
pub struct RemoteAnchoring {
    http: Http,
}

impl RemoteAnchoring {
    pub fn new(base: &str) -> RemoteAnchoring {
        RemoteAnchoring {
            http: Http::new(base, DEFAULT_READ_TIMEOUT),
        }
    }
}

impl AnchorClient for RemoteAnchoring {
    fn create_anchor(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        self.http
            .call("PUT", &format!("/anchor/{}/create/{anchor_id}", anchor_id.domain()), Body::Empty)
            .map(drop)
            .map_err(CallError::anchor)
    }

    fn append_version(&self, request: AppendRequest) -> Result<AppendReceipt, AnchorError> {
        let path = format!("/anchor/{}/append/{}", request.anchor_id.domain(), request.anchor_id);
        let body = json!({
            "new_link": request.new_link,
            "expected_last": request.expected_last,
            "signature": request.signature,
            "mode": request.mode,
        });
        self.http.json("PUT", &path, Body::Json(body)).map_err(CallError::anchor)
    }

    fn get_versions(&self, anchor_id: &AnchorId, include_pending: bool) -> Result<Vec<VersionEntry>, AnchorError> {
        let path = format!(
            "/anchor/{}/versions/{anchor_id}?include_pending={include_pending}",
            anchor_id.domain()
        );
        self.http.json("GET", &path, Body::Empty).map_err(CallError::anchor)
    }
}

struct Submission {
    anchor_id: AnchorId,
    entry: AnchorEntry,
    expected_last: Option<HashLink>,
    done: Completion,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Ticket {
    pub ticket: u64,
}

/// Another hub's raw ledger, reached through its `/ledger` endpoints.
///
/// Submissions leave in call order from one sender thread, so the remote
/// ledger sees them in the order this node made them; outcomes arrive
/// asynchronously.
pub struct RemoteLedger {
    http: Http,
    domain: String,
    queue: Mutex<mpsc::Sender<Submission>>,
}

impl RemoteLedger {
    pub fn new(base: &str, domain: &str) -> RemoteLedger {
        let http = Http::new(base, DEFAULT_READ_TIMEOUT);
        let (tx, rx) = mpsc::channel::<Submission>();
        let worker = http.clone();
        let worker_domain = domain.to_owned();
        thread::Builder::new()
            .name("remote-ledger".into())
            .spawn(move || {
                for s in rx {
                    let path = format!("/ledger/{worker_domain}/submit/{}", s.anchor_id);
                    let body = serde_json::to_value(SubmitBody {
                        entry: s.entry,
                        expected_last: s.expected_last,
                    })
                    .expect("serializable");
                    match worker.json::<Ticket>("POST", &path, Body::Json(body)) {
                        Ok(t) => {
                            let poller = worker.clone();
                            let path = format!("/ledger/{worker_domain}/receipt/{}", t.ticket);
                            thread::spawn(move || (s.done)(await_receipt(&poller, &path)));
                        }
                        Err(e) => (s.done)(Err(e.anchor())),
                    }
                }
            })
            .expect("spawn remote ledger sender");
        RemoteLedger {
            http,
            domain: domain.to_owned(),
            queue: Mutex::new(tx),
        }
    }
}

fn await_receipt(http: &Http, path: &str) -> Result<LedgerReceipt, AnchorError> {
    loop {
        let resp = http.call("GET", path, Body::Empty).map_err(CallError::anchor)?;
        if resp.status() == 202 {
            continue;
        }
        let text = resp.into_string()?;
        return serde_json::from_str(&text).map_err(|e| AnchorError::Unavailable(e.to_string()));
    }
}

impl LedgerBackend for RemoteLedger {
    fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        self.http
            .call("PUT", &format!("/ledger/{}/create/{anchor_id}", self.domain), Body::Empty)
            .map(drop)
            .map_err(CallError::anchor)
    }

    fn submit(&self, anchor_id: &AnchorId, entry: AnchorEntry, expected_last: Option<HashLink>, done: Completion) {
        let submission = Submission {
            anchor_id: anchor_id.clone(),
            entry,
            expected_last,
            done,
        };
        if let Err(mpsc::SendError(s)) = self.queue.lock().send(submission) {
            (s.done)(Err(AnchorError::Unavailable("remote ledger sender stopped".into())));
        }
    }

    fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
        self.http
            .json("GET", &format!("/ledger/{}/history/{anchor_id}", self.domain), Body::Empty)
            .map_err(CallError::anchor)
    }
}

#[derive(Deserialize)]
struct IdReply {
    id: String,
}

#[derive(Deserialize)]
struct NonceReply {
    nonce: String,
}

#[derive(Deserialize)]
struct LinksReply {
    links: Vec<HashLink>,
}

/// Client for the hub-level endpoints: health, BDNS, queues, notifications.
#[derive(Clone)]
pub struct HubClient {
    http: Http,
}

impl HubClient {
    pub fn new(base: &str) -> HubClient {
        HubClient {
            http: Http::new(base, Duration::from_secs(90)),
        }
    }

    pub fn base(&self) -> &str {
        &self.http.base
    }

    pub fn ready(&self) -> Result<Ready, String> {
        self.http.json("GET", "/ready", Body::Empty).map_err(|e| format!("{e:?}"))
    }

    pub fn bdns(&self) -> Result<BdnsTable, String> {
        let resp = self.http.call("GET", "/bdns", Body::Empty).map_err(|e| format!("{e:?}"))?;
        let text = resp.into_string().map_err(|e| e.to_string())?;
        BdnsTable::from_json(text.as_bytes()).map_err(|e| e.to_string())
    }

    pub fn mq_put(&self, channel: &AnchorId, payload: &[u8]) -> Result<String, MessagingError> {
        let path = format!("/mq/{}/put/{channel}", channel.domain());
        let reply: IdReply = self.http.json("PUT", &path, Body::Bytes(payload)).map_err(CallError::messaging)?;
        Ok(reply.id)
    }

    pub fn mq_nonce(&self, channel: &AnchorId) -> Result<String, MessagingError> {
        let path = format!("/mq/{}/nonce/{channel}", channel.domain());
        let reply: NonceReply = self.http.json("GET", &path, Body::Empty).map_err(CallError::messaging)?;
        Ok(reply.nonce)
    }

    pub fn mq_take_signed(
        &self,
        channel: &AnchorId,
        nonce: &str,
        signature: Signature,
    ) -> Result<Option<MqMessage>, MessagingError> {
        let path = format!("/mq/{}/take/{channel}", channel.domain());
        let body = serde_json::to_value(TakeBody {
            nonce: nonce.to_owned(),
            signature,
        })
        .expect("serializable");
        let resp = self
            .http
            .call("POST", &path, Body::Json(body))
            .map_err(CallError::messaging)?;
        if resp.status() == 204 {
            return Ok(None);
        }
        let text = resp
            .into_string()
            .map_err(|e| MessagingError::Anchor(AnchorError::Unavailable(e.to_string())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| MessagingError::Anchor(AnchorError::Unavailable(e.to_string())))
    }

    /// Fetches a nonce, signs it with `owner` and takes one message.
    pub fn mq_take(&self, owner: &KeySsi, channel: &AnchorId) -> Result<Option<MqMessage>, MessagingError> {
        let nonce = self.mq_nonce(channel)?;
        let signature = sign_take(owner, channel, &nonce)?;
        self.mq_take_signed(channel, &nonce, signature)
    }

    /// Long-polls for confirmed links after `after`.
    pub fn subscribe(&self, anchor: &AnchorId, after: Option<&HashLink>) -> Result<Vec<HashLink>, MessagingError> {
        let mut path = format!("/notifications/{}/subscribe/{anchor}", anchor.domain());
        if let Some(a) = after {
            path.push_str(&format!("?after={a}"));
        }
        let reply: LinksReply = self.http.json("GET", &path, Body::Empty).map_err(CallError::messaging)?;
        Ok(reply.links)
    }
}

enum Route {
    Fixed(String),
    Bdns(Arc<Bdns>),
}

/// Finds remote services for a domain, either one hub for everything or
/// the first anchoring and brick endpoints BDNS lists.
pub struct HubLocator {
    route: Route,
    bricks: Mutex<HashMap<String, Arc<RemoteBrickStore>>>,
    anchors: Mutex<HashMap<String, Arc<RemoteAnchoring>>>,
}

impl HubLocator {
    pub fn fixed(base: &str) -> HubLocator {
        HubLocator::with_route(Route::Fixed(base.trim_end_matches('/').to_owned()))
    }

    pub fn bdns(bdns: Arc<Bdns>) -> HubLocator {
        HubLocator::with_route(Route::Bdns(bdns))
    }

    fn with_route(route: Route) -> HubLocator {
        HubLocator {
            route,
            bricks: Mutex::new(HashMap::new()),
            anchors: Mutex::new(HashMap::new()),
        }
    }

    fn base(&self, domain: &str, anchoring: bool) -> Result<String, DsuError> {
        match &self.route {
            Route::Fixed(base) => Ok(base.clone()),
            Route::Bdns(bdns) => {
                let record = bdns.resolve(domain).map_err(|e| DsuError::Service(e.to_string()))?;
                let list = if anchoring {
                    &record.anchoring_services
                } else {
                    &record.brick_storages
                };
                list.first()
                    .map(|e| e.base().to_owned())
                    .ok_or_else(|| DsuError::Service(format!("no endpoint listed for {domain}")))
            }
        }
    }
}

impl ServiceLocator for HubLocator {
    fn bricks(&self, domain: &str) -> Result<Arc<dyn BrickStore>, DsuError> {
        let base = self.base(domain, false)?;
        let store = Arc::clone(
            self.bricks
                .lock()
                .entry(base.clone())
                .or_insert_with(|| Arc::new(RemoteBrickStore::new(&base))),
        );
        Ok(store)
    }

    fn anchors(&self, domain: &str) -> Result<Arc<dyn AnchorClient>, DsuError> {
        let base = self.base(domain, true)?;
        let client = Arc::clone(
            self.anchors
                .lock()
                .entry(base.clone())
                .or_insert_with(|| Arc::new(RemoteAnchoring::new(&base))),
        );
        Ok(client)
    }
}
