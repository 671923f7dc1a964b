//! The HTTP service. Paths follow `/{component}/{domain}/{action}/{param}`.
//!
//! Module calls block, so handlers run them on the blocking pool under the
//! request timeout. Each request is logged as one structured event with
//! method, path, status and latency in microseconds.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, RawQuery, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use dsukit_core::anchoring::{
    AnchorEntry, AnchorError, AnchorId, AnchoringService, AppendRequest, ExecutionMode, HashLink,
    LedgerBackend, LedgerReceipt,
};
use dsukit_core::bdns::Bdns;
use dsukit_core::brickstore::{BrickHash, BrickStore};
use dsukit_core::keyssi::Signature;
use dsukit_core::messaging::{MessageQueues, Notifier};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::{oneshot, Notify};

use crate::config::{ConfigError, HubConfig};
use crate::wire::ApiError;

const RECONCILE_INTERVAL: Duration = Duration::from_millis(500);
const BDNS_POLL_INTERVAL: Duration = Duration::from_secs(1);

/// `GET /ready`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ready {
    pub label: String,
    pub domains: Vec<String>,
    pub default_mode: ExecutionMode,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SubmitBody {
    pub entry: AnchorEntry,
    pub expected_last: Option<HashLink>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct TakeBody {
    pub nonce: String,
    pub signature: Signature,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendBody {
    new_link: HashLink,
    #[serde(default)]
    expected_last: Option<HashLink>,
    signature: Signature,
    #[serde(default)]
    mode: Option<ExecutionMode>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("runtime: {0}")]
    Runtime(std::io::Error),
}

type Outcome = Result<LedgerReceipt, AnchorError>;

struct Slot {
    outcome: Option<Outcome>,
    notify: Arc<Notify>,
}

/// Outcomes of raw ledger submissions, collected by ticket.
#[derive(Default)]
struct Tickets {
    next: AtomicU64,
    slots: Mutex<HashMap<u64, Slot>>,
}

struct DomainServices {
    bricks: Arc<dyn BrickStore>,
    ledger: Arc<dyn LedgerBackend>,
    anchoring: Arc<AnchoringService>,
    queues: MessageQueues,
    notifier: Notifier,
    tickets: Arc<Tickets>,
}

struct Hub {
    label: String,
    default_mode: ExecutionMode,
    request_timeout: Duration,
    long_poll: Duration,
    bdns: Option<Arc<Bdns>>,
    domains: HashMap<String, Arc<DomainServices>>,
}

impl Hub {
    fn build(config: &HubConfig) -> Result<Hub, ConfigError> {
        config.validate()?;
        let bdns = match &config.bdns {
            Some(path) => {
                let bdns = Arc::new(Bdns::from_path(path).map_err(|e| ConfigError::Invalid(e.to_string()))?);
                bdns.spawn_watcher(BDNS_POLL_INTERVAL);
                Some(bdns)
            }
            None => None,
        };
        let mut domains = HashMap::new();
        for (name, binding) in &config.domains {
            let ledger = binding.open_ledger(name)?;
            let anchoring = AnchoringService::new(Arc::clone(&ledger));
            anchoring.spawn_reconciler(RECONCILE_INTERVAL);
            let services = DomainServices {
                bricks: binding.open_bricks(name)?,
                queues: MessageQueues::new(anchoring.clone()),
                notifier: Notifier::new(anchoring.clone()),
                ledger,
                anchoring,
                tickets: Arc::default(),
            };
            domains.insert(name.clone(), Arc::new(services));
        }
        Ok(Hub {
            label: config.label.clone(),
            default_mode: config.default_mode,
            request_timeout: Duration::from_millis(config.request_timeout_ms),
            long_poll: Duration::from_millis(config.long_poll_timeout_ms),
            bdns,
            domains,
        })
    }

    fn domain(&self, name: &str) -> Result<Arc<DomainServices>, ApiError> {
        self.domains
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::unknown_domain(name))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body)).into_response()
    }
}

type Shared = State<Arc<Hub>>;
type ApiResult<T> = Result<T, ApiError>;

async fn run_blocking<T, F>(limit: Duration, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    match tokio::time::timeout(limit, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(result)) => result,
        Ok(Err(join)) => Err(ApiError::new(500, "internal", join.to_string())),
        Err(_) => Err(ApiError::new(504, "timeout", format!("no answer within {limit:?}"))),
    }
}

fn anchor_param(text: &str) -> ApiResult<AnchorId> {
    AnchorId::parse(text).map_err(|e| ApiError::bad_param("anchorId", e.to_string()))
}

fn json_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(400, "bad_request", e.to_string()).with_field("body"))
}

fn query(raw: Option<String>) -> HashMap<String, String> {
    raw.map(|q| {
        q.split('&')
            .filter_map(|pair| pair.split_once('=').or(Some((pair, ""))))
            .filter(|(k, _)| !k.is_empty())
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect()
    })
    .unwrap_or_default()
}

async fn ready(State(hub): Shared) -> Json<Ready> {
    let mut domains: Vec<String> = hub.domains.keys().cloned().collect();
    domains.sort();
    Json(Ready {
        label: hub.label.clone(),
        domains,
        default_mode: hub.default_mode,
    })
}

async fn bdns(State(hub): Shared) -> ApiResult<Response> {
    let bdns = hub
        .bdns
        .as_ref()
        .ok_or_else(|| ApiError::new(404, "not_found", "this hub has no BDNS table configured"))?;
    Ok(Json(&*bdns.snapshot()).into_response())
}

async fn brick_put(State(hub): Shared, Path(domain): Path<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let services = hub.domain(&domain)?;
    run_blocking(hub.request_timeout, move || {
        let hash = services.bricks.put_brick(&domain, &body)?;
        Ok(Json(json!({ "hash": hash.to_hex() })))
    })
    .await
}

async fn brick_get(State(hub): Shared, Path((domain, hash)): Path<(String, String)>) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let hash = BrickHash::parse(&hash).map_err(|e| ApiError::bad_param("hash", e.to_string()))?;
    run_blocking(hub.request_timeout, move || {
        let data = services.bricks.get_brick(&domain, &hash)?;
        Ok(([(header::CONTENT_TYPE, "application/octet-stream")], data).into_response())
    })
    .await
}

fn check_domain(domain: &str, id: &AnchorId) -> ApiResult<()> {
    if id.domain() != domain {
        return Err(ApiError::bad_param(
            "anchorId",
            format!("anchor {id} belongs to domain {}, not {domain}", id.domain()),
        ));
    }
    Ok(())
}

async fn anchor_create(State(hub): Shared, Path((domain, id)): Path<(String, String)>) -> ApiResult<StatusCode> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    check_domain(&domain, &id)?;
    run_blocking(hub.request_timeout, move || {
        services.anchoring.create_anchor(&id)?;
        Ok(StatusCode::CREATED)
    })
    .await
}

async fn anchor_append(
    State(hub): Shared,
    Path((domain, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    check_domain(&domain, &id)?;
    let body: AppendBody = json_body(&body)?;
    let request = AppendRequest {
        anchor_id: id,
        new_link: body.new_link,
        expected_last: body.expected_last,
        signature: body.signature,
        mode: body.mode.unwrap_or(hub.default_mode),
    };
    run_blocking(hub.request_timeout, move || {
        Ok(Json(services.anchoring.append_version(request)?).into_response())
    })
    .await
}

async fn anchor_versions(
    State(hub): Shared,
    Path((domain, id)): Path<(String, String)>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    let include_pending = match query(raw).get("include_pending").map(String::as_str) {
        None | Some("false") => false,
        Some("true") | Some("") => true,
        Some(other) => {
            return Err(ApiError::bad_param("include_pending", format!("expected a boolean, got {other:?}")))
        }
    };
    run_blocking(hub.request_timeout, move || {
        Ok(Json(services.anchoring.get_versions(&id, include_pending)?).into_response())
    })
    .await
}

async fn mq_put(State(hub): Shared, Path((domain, id)): Path<(String, String)>, body: Bytes) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    run_blocking(hub.request_timeout, move || {
        let message_id = services.queues.put(&id, body.to_vec())?;
        Ok(Json(json!({ "id": message_id })).into_response())
    })
    .await
}

async fn mq_nonce(State(hub): Shared, Path((domain, id)): Path<(String, String)>) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    run_blocking(hub.request_timeout, move || {
        let nonce = services.queues.issue_nonce(&id)?;
        Ok(Json(json!({ "nonce": nonce })).into_response())
    })
    .await
}

async fn mq_take(State(hub): Shared, Path((domain, id)): Path<(String, String)>, body: Bytes) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    let body: TakeBody = json_body(&body)?;
    run_blocking(hub.request_timeout, move || {
        Ok(match services.queues.take(&id, &body.nonce, &body.signature)? {
            Some(message) => Json(message).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        })
    })
    .await
}

async fn subscribe(
    State(hub): Shared,
    Path((domain, id)): Path<(String, String)>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    let after = match query(raw).get("after") {
        Some(text) => Some(HashLink::parse(text).map_err(|e| ApiError::bad_param("after", e.to_string()))?),
        None => None,
    };
    let wait = hub.long_poll;
    run_blocking(wait + Duration::from_secs(5), move || {
        let links = services.notifier.poll(&id, after.as_ref(), wait)?;
        Ok(Json(json!({ "links": links })).into_response())
    })
    .await
}

async fn ledger_create(State(hub): Shared, Path((domain, id)): Path<(String, String)>) -> ApiResult<StatusCode> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    run_blocking(hub.request_timeout, move || {
        services.ledger.create(&id)?;
        Ok(StatusCode::CREATED)
    })
    .await
}

async fn ledger_submit(
    State(hub): Shared,
    Path((domain, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    let body: SubmitBody = json_body(&body)?;
    run_blocking(hub.request_timeout, move || {
        let tickets = Arc::clone(&services.tickets);
        let ticket = tickets.next.fetch_add(1, Ordering::Relaxed);
        let notify = Arc::new(Notify::new());
        tickets.slots.lock().insert(
            ticket,
            Slot {
                outcome: None,
                notify: Arc::clone(&notify),
            },
        );
        let done_tickets = Arc::clone(&tickets);
        services.ledger.submit(
            &id,
            body.entry,
            body.expected_last,
            Box::new(move |outcome| {
                if let Some(slot) = done_tickets.slots.lock().get_mut(&ticket) {
                    slot.outcome = Some(outcome);
                }
                notify.notify_one();
            }),
        );
        Ok(Json(json!({ "ticket": ticket })).into_response())
    })
    .await
}

async fn ledger_receipt(State(hub): Shared, Path((domain, ticket)): Path<(String, String)>) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let ticket: u64 = ticket
        .parse()
        .map_err(|_| ApiError::bad_param("ticket", format!("{ticket:?} is not a ticket number")))?;
    let deadline = tokio::time::Instant::now() + hub.long_poll;
    loop {
        let notify = {
            let mut slots = services.tickets.slots.lock();
            let slot = slots
                .get_mut(&ticket)
                .ok_or_else(|| ApiError::new(404, "not_found", format!("ticket {ticket} is unknown or collected")))?;
            if let Some(outcome) = slot.outcome.take() {
                slots.remove(&ticket);
                return Ok(Json(outcome?).into_response());
            }
            Arc::clone(&slot.notify)
        };
        if tokio::time::timeout_at(deadline, notify.notified()).await.is_err() {
            return Ok((StatusCode::ACCEPTED, Json(json!({ "pending": true }))).into_response());
        }
    }
}

async fn ledger_history(State(hub): Shared, Path((domain, id)): Path<(String, String)>) -> ApiResult<Response> {
    let services = hub.domain(&domain)?;
    let id = anchor_param(&id)?;
    run_blocking(hub.request_timeout, move || {
        Ok(Json(services.ledger.history(&id)?).into_response())
    })
    .await
}

async fn fallback(request: Request) -> ApiError {
    let component = request.uri().path().trim_start_matches('/').split('/').next().unwrap_or("");
    ApiError::new(404, "not_found", format!("no endpoint for {} {}", request.method(), request.uri().path()))
        .with_field(if component.is_empty() { "path" } else { "component" })
}

async fn log_requests(request: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = request.method().clone();
    let path = request.uri().path().to_owned();
    let response = next.run(request).await;
    tracing::info!(
        target: "dsukit::request",
        method = %method,
        path = %path,
        status = response.status().as_u16(),
        latency_us = start.elapsed().as_micros() as u64,
    );
    response
}

fn router(hub: Arc<Hub>, max_body: usize) -> Router {
    Router::new()
        .route("/ready", get(ready))
        .route("/bdns", get(bdns))
        .route("/bricking/:domain/put", put(brick_put))
        .route("/bricking/:domain/get/:hash", get(brick_get))
        .route("/anchor/:domain/create/:id", put(anchor_create))
        .route("/anchor/:domain/append/:id", put(anchor_append))
        .route("/anchor/:domain/versions/:id", get(anchor_versions))
        .route("/mq/:domain/put/:id", put(mq_put))
        .route("/mq/:domain/nonce/:id", get(mq_nonce))
        .route("/mq/:domain/take/:id", post(mq_take))
        .route("/notifications/:domain/subscribe/:id", get(subscribe))
        .route("/ledger/:domain/create/:id", put(ledger_create))
        .route("/ledger/:domain/submit/:id", post(ledger_submit))
        .route("/ledger/:domain/receipt/:ticket", get(ledger_receipt))
        .route("/ledger/:domain/history/:id", get(ledger_history))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(max_body))
        .layer(middleware::from_fn(log_requests))
        .with_state(hub)
}

/// A running hub. Dropping it shuts the server down.
pub struct HubHandle {
    addr: SocketAddr,
    label: String,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<(), std::io::Error>>>,
}

impl HubHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn shutdown(mut self) -> Result<(), std::io::Error> {
        self.stop_and_join()
    }

    /// Blocks until the server exits (Ctrl-C or [`HubHandle::shutdown`]
    /// from elsewhere).
    pub fn wait(mut self) -> Result<(), std::io::Error> {
        self.wait_inner()
    }

    fn stop_and_join(&mut self) -> Result<(), std::io::Error> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.wait_inner()
    }

    fn wait_inner(&mut self) -> Result<(), std::io::Error> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for HubHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Builds every backend, binds the listen address and starts serving on a
/// background runtime.
pub fn serve(config: HubConfig) -> Result<HubHandle, ServeError> {
    let hub = Arc::new(Hub::build(&config)?);
    let listener = std::net::TcpListener::bind(config.listen).map_err(|source| ServeError::Bind {
        addr: config.listen,
        source,
    })?;
    listener.set_nonblocking(true).map_err(ServeError::Runtime)?;
    let addr = listener.local_addr().map_err(ServeError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .thread_name("apihub")
        .build()
        .map_err(ServeError::Runtime)?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(hub, config.max_body_bytes);
    let thread = thread::Builder::new()
        .name(format!("apihub-{}", config.label))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                let shutdown = async move {
                    tokio::select! {
                        _ = stopped => {}
                        _ = tokio::signal::ctrl_c() => {}
                    }
                };
                axum::serve(listener, app).with_graceful_shutdown(shutdown).await
            })
        })
        .map_err(ServeError::Runtime)?;
    tracing::info!(label = %config.label, %addr, "apihub listening");
    Ok(HubHandle {
        addr,
        label: config.label,
        stop: Some(stop),
        thread: Some(thread),
    })
}
