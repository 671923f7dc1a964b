//! APIHub: the HTTP face of the DSU stack, plus clients for it.
//!
//! A hub serves bricking, anchoring, BDNS, message queue and notification
//! endpoints for one or more blockchain domains. Several hubs can share a
//! ledger by pointing a `remote` ledger binding at one hub's `/ledger`
//! endpoints.

pub mod client;
pub mod config;
pub mod server;
pub mod wire;

pub use client::{HubClient, HubLocator, RemoteAnchoring, RemoteBrickStore, RemoteLedger};
pub use config::{BrickBinding, ConfigError, DomainBinding, HubConfig};
pub use server::{serve, HubHandle, Ready, ServeError};
pub use wire::{ApiError, ErrorBody};
