use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;

use super::{check_put, BrickError, BrickHash, BrickStore};

/// Bricks held in process memory, keyed by domain and hash.
#[derive(Default)]
pub struct MemoryBrickStore {
    bricks: RwLock<HashMap<(String, BrickHash), Arc<[u8]>>>,
}

impl MemoryBrickStore {
    pub fn new() -> MemoryBrickStore {
        MemoryBrickStore::default()
    }

    pub fn len(&self) -> usize {
        self.bricks.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.bricks.read().is_empty()
    }

    /// Every stored brick, for inspection in tests and tooling.
    pub fn snapshot(&self) -> Vec<Arc<[u8]>> {
        self.bricks.read().values().cloned().collect()
    }
}

impl BrickStore for MemoryBrickStore {
    fn put_brick(&self, domain: &str, ciphertext: &[u8]) -> Result<BrickHash, BrickError> {
        check_put(domain, ciphertext)?;
        let hash = BrickHash::of(ciphertext);
        self.bricks
            .write()
            .entry((domain.to_owned(), hash))
            .or_insert_with(|| Arc::from(ciphertext));
        Ok(hash)
    }

    fn get_brick(&self, domain: &str, hash: &BrickHash) -> Result<Vec<u8>, BrickError> {
        let bricks = self.bricks.read();
        let data = bricks
            .get(&(domain.to_owned(), *hash))
            .ok_or(BrickError::NotFound(*hash))?;
        Ok(data.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_is_idempotent() {
        let store = MemoryBrickStore::new();
        let a = store.put_brick("pharma", b"cipher").unwrap();
        let b = store.put_brick("pharma", b"cipher").unwrap();
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
        assert_eq!(store.get_brick("pharma", &a).unwrap(), b"cipher");
    }

    #[test]
    fn empty_and_unknown() {
        let store = MemoryBrickStore::new();
        assert!(matches!(store.put_brick("pharma", b""), Err(BrickError::Empty)));
        let zero = BrickHash::parse(&"0".repeat(64)).unwrap();
        assert!(matches!(
            store.get_brick("pharma", &zero),
            Err(BrickError::NotFound(_))
        ));
    }

    #[test]
    fn domains_are_separate() {
        let store = MemoryBrickStore::new();
        let h = store.put_brick("a", b"x").unwrap();
        assert!(store.get_brick("b", &h).is_err());
    }
}
