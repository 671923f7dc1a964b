//! Data Sharing Units: versioned, encrypted micro file systems.
//!
//! A DSU's state is a map from path to bytes plus a set of mounts. Each
//! commit chunks changed files into encrypted bricks, writes a new brick map
//! and anchors its hash link. What a handle can do depends on the rank of
//! the KeySSI it was opened with.

mod brickmap;
mod constssi;
mod handle;
pub mod path;
mod secret;

use std::sync::Arc;

use thiserror::Error;

pub use brickmap::{canonical_json, BrickMap, BrickRef, FileEntry, MountEntry, SectionMap};
pub use constssi::{const_seed, publish_const, resolve_const};
pub use handle::{create_dsu, history, load_dsu, DsuHandle, CHUNK_SIZE, MAX_MOUNT_DEPTH};
pub use secret::{create_secret_dsu, SECRET_DSU_TYPE, WHITELIST_PATH};

use crate::anchoring::{AnchorClient, AnchorError};
use crate::brickstore::{BrickError, BrickStore};
use crate::keyssi::{AccessLevel, KeySsiError};

#[derive(Debug, Error)]
pub enum DsuError {
    #[error(transparent)]
    Key(#[from] KeySsiError),
    #[error(transparent)]
    Brick(#[from] BrickError),
    #[error(transparent)]
    Anchor(AnchorError),
    #[error("{op} requires {required} rank, handle has {actual}")]
    Privilege {
        op: &'static str,
        required: AccessLevel,
        actual: AccessLevel,
    },
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("version {0} is not in the DSU history")]
    VersionNotFound(String),
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("path conflict: {0}")]
    PathConflict(String),
    #[error("{path} lies under mount point {mount}; write through the mounted DSU")]
    MountedPath { path: String, mount: String },
    #[error("mount cycle through anchor {0}")]
    MountCycle(String),
    #[error("mount chain deeper than {0}")]
    MountDepth(usize),
    #[error("nothing to commit")]
    NoChanges,
    #[error("DSU already exists for anchor {0}")]
    AlreadyExists(String),
    #[error("commit conflict, reload the DSU: {0}")]
    CommitConflict(String),
    #[error("modifier key {0} is not on the control whitelist")]
    NotWhitelisted(String),
    #[error("{0} is immutable")]
    Immutable(String),
    #[error("corrupt DSU data: {0}")]
    Corrupt(String),
    #[error("service lookup failed: {0}")]
    Service(String),
}

impl From<AnchorError> for DsuError {
    fn from(e: AnchorError) -> Self {
        match e {
            AnchorError::Conflict { .. } => DsuError::CommitConflict(e.to_string()),
            AnchorError::AlreadyExists(id) => DsuError::AlreadyExists(id),
            other => DsuError::Anchor(other),
        }
    }
}

/// Finds the brick storage and anchoring service for a blockchain domain.
pub trait ServiceLocator: Send + Sync {
    fn bricks(&self, domain: &str) -> Result<Arc<dyn BrickStore>, DsuError>;
    fn anchors(&self, domain: &str) -> Result<Arc<dyn AnchorClient>, DsuError>;
}

/// One brick store and one anchoring service for every domain.
#[derive(Clone)]
pub struct StaticLocator {
    bricks: Arc<dyn BrickStore>,
    anchors: Arc<dyn AnchorClient>,
}

impl StaticLocator {
    pub fn new(bricks: Arc<dyn BrickStore>, anchors: Arc<dyn AnchorClient>) -> StaticLocator {
        StaticLocator { bricks, anchors }
    }
}

impl ServiceLocator for StaticLocator {
    fn bricks(&self, _domain: &str) -> Result<Arc<dyn BrickStore>, DsuError> {
        Ok(Arc::clone(&self.bricks))
    }

    fn anchors(&self, _domain: &str) -> Result<Arc<dyn AnchorClient>, DsuError> {
        Ok(Arc::clone(&self.anchors))
    }
}
