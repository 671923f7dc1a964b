//! Core of the DSU toolkit: KeySSI identities, encrypted brick storage,
//! signed anchor histories, versioned DSU containers, BDNS resolution and
//! wallet messaging.

pub mod anchoring;
pub mod bdns;
pub mod brickstore;
pub mod crypto;
pub mod dsu;
pub mod keyssi;
pub mod messaging;

pub use keyssi::{AccessLevel, Family, KeySsi, KeySsiError, Signature, SsiType};
