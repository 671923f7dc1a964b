//! Hub configuration: listen address, BDNS table and per-domain backends.
//!
//! ```json
//! {
//!   "label": "consortium",
//!   "listen": "127.0.0.1:8080",
//!   "bdns": "bdns.json",
//!   "default_mode": "validated",
//!   "domains": {
//!     "pharma": {
//!       "bricks": {"kind": "fs", "root": "/var/lib/dsukit/bricks"},
//!       "ledger": {"kind": "simulated-chain", "latency_ms": 2000, "cap_tps": 300}
//!     }
//!   }
//! }
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dsukit_core::anchoring::{
    AnchorPolicy, ExecutionMode, FileLedger, LedgerBackend, MemoryLedger, SimChainConfig, SimulatedChain,
};
use dsukit_core::bdns::{Endpoint, LedgerDescriptor, LedgerKind};
use dsukit_core::brickstore::{BrickStore, FsBrickStore, MemoryBrickStore};
use dsukit_core::keyssi::validate_domain;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{RemoteBrickStore, RemoteLedger};

pub const ENV_LISTEN: &str = "DSUKIT_LISTEN";
pub const ENV_BDNS: &str = "DSUKIT_BDNS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid hub config: {0}")]
    Invalid(String),
    #[error("domain {domain}: {message}")]
    Domain { domain: String, message: String },
    #[error("cannot start backend for {domain}: {message}")]
    Backend { domain: String, message: String },
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_label() -> String {
    "apihub".into()
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_body() -> usize {
    2 * 1024 * 1024
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubConfig {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Table served on `GET /bdns`.
    #[serde(default)]
    pub bdns: Option<PathBuf>,
    /// Mode applied to append requests that do not name one.
    #[serde(default)]
    pub default_mode: ExecutionMode,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub long_poll_timeout_ms: u64,
    #[serde(default = "default_max_body")]
    pub max_body_bytes: usize,
    pub domains: BTreeMap<String, DomainBinding>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBinding {
    pub bricks: BrickBinding,
    pub ledger: LedgerDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BrickBinding {
    Memory,
    Fs { root: PathBuf },
    /// Another hub's bricking endpoint.
    Remote { url: Endpoint },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalParams {
    #[serde(default)]
    policy: AnchorPolicy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLogParams {
    path: PathBuf,
    #[serde(default)]
    policy: AnchorPolicy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoteParams {
    url: Endpoint,
}

fn params<T: DeserializeOwned>(domain: &str, desc: &LedgerDescriptor) -> Result<T, ConfigError> {
    let map = desc.params.clone().into_iter().collect::<serde_json::Map<_, _>>();
    serde_json::from_value(map.into()).map_err(|e| ConfigError::Domain {
        domain: domain.to_owned(),
        message: format!("ledger parameters: {e}"),
    })
}

impl HubConfig {
    /// A config serving `domains` from memory, for tests and demos.
    pub fn in_memory(label: &str, domains: &[&str]) -> HubConfig {
        HubConfig {
            label: label.to_owned(),
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            bdns: None,
            default_mode: ExecutionMode::Validated,
            request_timeout_ms: default_timeout_ms(),
            long_poll_timeout_ms: default_timeout_ms(),
            max_body_bytes: default_max_body(),
            domains: domains
                .iter()
                .map(|d| {
                    let binding = DomainBinding {
                        bricks: BrickBinding::Memory,
                        ledger: LedgerDescriptor {
                            kind: LedgerKind::Memory,
                            params: BTreeMap::new(),
                        },
                    };
                    ((*d).to_owned(), binding)
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<HubConfig, ConfigError> {
        let config: HubConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<HubConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut config = HubConfig::from_json(&text)?;
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(b) = self.bdns.as_mut() {
            fix(b);
        }
        for binding in self.domains.values_mut() {
            if let BrickBinding::Fs { root } = &mut binding.bricks {
                fix(root);
            }
            if binding.ledger.kind == LedgerKind::FileLog {
                if let Some(serde_json::Value::String(p)) = binding.ledger.params.get_mut("path") {
                    let mut path = PathBuf::from(&*p);
                    fix(&mut path);
                    *p = path.to_string_lossy().into_owned();
                }
            }
        }
    }

    /// Applies `DSUKIT_LISTEN` and `DSUKIT_BDNS`.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(listen) = std::env::var(ENV_LISTEN) {
            self.listen = listen
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("{ENV_LISTEN}={listen:?}: {e}")))?;
        }
        if let Some(bdns) = std::env::var_os(ENV_BDNS) {
            self.bdns = Some(bdns.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.domains.is_empty() {
            return Err(ConfigError::Invalid("no domains configured".into()));
        }
        if self.request_timeout_ms == 0 || self.long_poll_timeout_ms == 0 || self.max_body_bytes == 0 {
            return Err(ConfigError::Invalid("timeouts and body limit must be positive".into()));
        }
        for (domain, binding) in &self.domains {
            validate_domain(domain).map_err(|e| ConfigError::Domain {
                domain: domain.clone(),
                message: e.to_string(),
            })?;
            match binding.ledger.kind {
                LedgerKind::Memory => drop(params::<LocalParams>(domain, &binding.ledger)?),
                LedgerKind::FileLog => drop(params::<FileLogParams>(domain, &binding.ledger)?),
                LedgerKind::SimulatedChain => {
                    let sim = params::<SimChainConfig>(domain, &binding.ledger)?;
                    if !(sim.cap_tps.is_finite() && sim.cap_tps > 0.0) {
                        return Err(ConfigError::Domain {
                            domain: domain.clone(),
                            message: "cap_tps must be a positive number".into(),
                        });
                    }
                }
                LedgerKind::Remote => drop(params::<RemoteParams>(domain, &binding.ledger)?),
            }
        }
        Ok(())
    }
}

impl DomainBinding {
    pub(crate) fn open_bricks(&self, domain: &str) -> Result<Arc<dyn BrickStore>, ConfigError> {
        Ok(match &self.bricks {
            BrickBinding::Memory => Arc::new(MemoryBrickStore::default()),
            BrickBinding::Fs { root } => Arc::new(FsBrickStore::open(root).map_err(|e| ConfigError::Backend {
                domain: domain.to_owned(),
                message: e.to_string(),
            })?),
            BrickBinding::Remote { url } => Arc::new(RemoteBrickStore::new(url.base())),
        })
    }

    pub(crate) fn open_ledger(&self, domain: &str) -> Result<Arc<dyn LedgerBackend>, ConfigError> {
        let backend = |message: String| ConfigError::Backend {
            domain: domain.to_owned(),
            message,
        };
        Ok(match self.ledger.kind {
            LedgerKind::Memory => Arc::new(MemoryLedger::new(params::<LocalParams>(domain, &self.ledger)?.policy)),
            LedgerKind::FileLog => {
                let p: FileLogParams = params(domain, &self.ledger)?;
                Arc::new(FileLedger::open(&p.path, p.policy).map_err(|e| backend(e.to_string()))?)
            }
            LedgerKind::SimulatedChain => {
                let c: SimChainConfig = params(domain, &self.ledger)?;
                Arc::new(SimulatedChain::new(c).map_err(|e| backend(e.to_string()))?)
            }
            LedgerKind::Remote => {
                let p: RemoteParams = params(domain, &self.ledger)?;
                Arc::new(RemoteLedger::new(p.url.base(), domain))
            }
        })
    }
}
