//! Blockchain Domain Naming System: maps blockchain domains to service
//! endpoints.
//!
//! The table is a JSON object keyed by domain name. Resolution walks up the
//! hierarchy (`ePI.pharma` then `pharma`) and inherits each unset field from
//! the nearest ancestor that sets it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Weak};
use std::thread;
use std::time::{Duration, SystemTime};

use parking_lot::{Mutex, RwLock};
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::keyssi::validate_domain;

#[derive(Debug, Error)]
pub enum BdnsError {
    #[error("bdns config error at {location}: {message}")]
    Config { location: String, message: String },
    #[error("domain {0} is not configured")]
    NotFound(String),
    #[error("domain {domain} resolves without any {missing}")]
    Incomplete {
        domain: String,
        missing: &'static str,
    },
    #[error("invalid domain name {0:?}")]
    InvalidName(String),
    #[error("reading bdns config: {0}")]
    Io(#[from] std::io::Error),
}

/// An absolute http(s) service URL.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Endpoint(Url);

impl Endpoint {
    pub fn parse(text: &str) -> Result<Endpoint, String> {
        let url = Url::parse(text).map_err(|e| format!("endpoint {text:?}: {e}"))?;
        if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
            return Err(format!("endpoint {text:?} must be an http(s) URL with a host"));
        }
        Ok(Endpoint(url))
    }

    pub fn url(&self) -> &Url {
        &self.0
    }

    /// The URL without a trailing slash, ready for path concatenation.
    pub fn base(&self) -> &str {
        self.0.as_str().trim_end_matches('/')
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base())
    }
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Endpoint({})", self.0)
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Endpoint::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Which ledger serves a domain. Parameters are kind specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerDescriptor {
    pub kind: LedgerKind,
    #[serde(flatten)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LedgerKind {
    Memory,
    FileLog,
    SimulatedChain,
    Remote,
}

/// One table entry as written. Unset fields are inherited.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchoring_services: Option<Vec<Endpoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brick_storages: Option<Vec<Endpoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification_services: Option<Vec<Endpoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_backend: Option<LedgerDescriptor>,
    /// Unknown fields, kept so `GET /bdns` echoes the table faithfully.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// A fully resolved domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainRecord {
    pub name: String,
    pub anchoring_services: Vec<Endpoint>,
    pub brick_storages: Vec<Endpoint>,
    pub notification_services: Vec<Endpoint>,
    pub ledger_backend: Option<LedgerDescriptor>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BdnsTable {
    entries: BTreeMap<String, DomainEntry>,
}

impl BdnsTable {
    pub fn from_json(bytes: &[u8]) -> Result<BdnsTable, BdnsError> {
        serde_json::from_slice(bytes).map_err(|e| BdnsError::Config {
            location: format!("line {} column {}", e.line(), e.column()),
            message: strip_position(&e),
        })
    }

    pub fn load(path: &Path) -> Result<BdnsTable, BdnsError> {
        let bytes = std::fs::read(path)?;
        BdnsTable::from_json(&bytes).map_err(|e| match e {
            BdnsError::Config { location, message } => BdnsError::Config {
                location: format!("{}:{location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn insert(&mut self, domain: &str, entry: DomainEntry) -> Result<(), BdnsError> {
        validate_domain(domain).map_err(|_| BdnsError::InvalidName(domain.to_owned()))?;
        self.entries.insert(domain.to_owned(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entry(&self, domain: &str) -> Option<&DomainEntry> {
        self.entries.get(domain)
    }

    /// Resolves `name`, inheriting unset fields from ancestor domains.
    pub fn resolve(&self, name: &str) -> Result<DomainRecord, BdnsError> {
        validate_domain(name).map_err(|_| BdnsError::InvalidName(name.to_owned()))?;
        let chain: Vec<&DomainEntry> = ancestors(name).filter_map(|d| self.entries.get(d)).collect();
        if chain.is_empty() {
            return Err(BdnsError::NotFound(name.to_owned()));
        }
        fn first<T: Clone>(chain: &[&DomainEntry], field: impl Fn(&DomainEntry) -> Option<&T>) -> Option<T> {
            chain.iter().find_map(|e| field(e)).cloned()
        }
        let record = DomainRecord {
            name: name.to_owned(),
            anchoring_services: first(&chain, |e| e.anchoring_services.as_ref()).unwrap_or_default(),
            brick_storages: first(&chain, |e| e.brick_storages.as_ref()).unwrap_or_default(),
            notification_services: first(&chain, |e| e.notification_services.as_ref())
                .unwrap_or_default(),
            ledger_backend: first(&chain, |e| e.ledger_backend.as_ref()),
        };
        let incomplete = |missing| BdnsError::Incomplete {
            domain: name.to_owned(),
            missing,
        };
        if record.anchoring_services.is_empty() {
            return Err(incomplete("anchoring service"));
        }
        if record.brick_storages.is_empty() {
            return Err(incomplete("brick storage"));
        }
        Ok(record)
    }
}

/// `a.b.c`, `b.c`, `c`.
fn ancestors(name: &str) -> impl Iterator<Item = &str> {
    std::iter::successors(Some(name), |d| d.split_once('.').map(|(_, rest)| rest))
}

fn strip_position(e: &serde_json::Error) -> String {
    let text = e.to_string();
    match text.rfind(" at line ") {
        Some(i) => text[..i].to_owned(),
        None => text,
    }
}

impl Serialize for BdnsTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BdnsTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TableVisitor;

        impl<'de> Visitor<'de> for TableVisitor {
            type Value = BdnsTable;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object keyed by domain name")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<BdnsTable, A::Error> {
                let mut entries = BTreeMap::new();
                while let Some(domain) = map.next_key::<String>()? {
                    if entries.contains_key(&domain) {
                        return Err(serde::de::Error::custom(format!("duplicate domain {domain:?}")));
                    }
                    validate_domain(&domain).map_err(|_| {
                        serde::de::Error::custom(format!("invalid domain name {domain:?}"))
                    })?;
                    let entry: DomainEntry = map.next_value()?;
                    entries.insert(domain, entry);
                }
                Ok(BdnsTable { entries })
            }
        }

        deserializer.deserialize_map(TableVisitor)
    }
}

/// A table that can be swapped atomically. Readers take a snapshot and
/// keep it for as long as they like.
pub struct Bdns {
    path: Option<PathBuf>,
    current: RwLock<Arc<BdnsTable>>,
    modified: Mutex<Option<SystemTime>>,
}

impl Bdns {
    pub fn new(table: BdnsTable) -> Bdns {
        Bdns {
            path: None,
            current: RwLock::new(Arc::new(table)),
            modified: Mutex::new(None),
        }
    }

    pub fn from_path(path: impl Into<PathBuf>) -> Result<Bdns, BdnsError> {
        let path = path.into();
        let modified = std::fs::metadata(&path)?.modified().ok();
        let table = BdnsTable::load(&path)?;
        Ok(Bdns {
            path: Some(path),
            current: RwLock::new(Arc::new(table)),
            modified: Mutex::new(modified),
        })
    }

    pub fn snapshot(&self) -> Arc<BdnsTable> {
        Arc::clone(&self.current.read())
    }

    pub fn resolve(&self, name: &str) -> Result<DomainRecord, BdnsError> {
        self.snapshot().resolve(name)
    }

    pub fn replace(&self, table: BdnsTable) {
        *self.current.write() = Arc::new(table);
    }

    /// Rereads the backing file. On error the old table stays active.
    pub fn reload(&self) -> Result<(), BdnsError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let modified = std::fs::metadata(path)?.modified().ok();
        let table = BdnsTable::load(path)?;
        self.replace(table);
        *self.modified.lock() = modified;
        Ok(())
    }

    /// Reloads the file whenever its modification time changes.
    pub fn spawn_watcher(self: &Arc<Self>, interval: Duration) -> thread::JoinHandle<()> {
        let weak: Weak<Bdns> = Arc::downgrade(self);
        thread::spawn(move || loop {
            thread::sleep(interval);
            let Some(bdns) = weak.upgrade() else {
                return;
            };
            let Some(path) = &bdns.path else {
                return;
            };
            let seen = std::fs::metadata(path).and_then(|m| m.modified()).ok();
            if seen.is_some() && seen != *bdns.modified.lock() {
                if let Err(e) = bdns.reload() {
                    tracing::warn!(error = %e, "bdns reload failed, keeping the previous table");
                }
            }
        })
    }
}
