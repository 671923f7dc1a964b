//! Anchor update notifications as a long poll over the confirmed history.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::MessagingError;
use crate::anchoring::{AnchorClient, AnchorId, HashLink};

const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(25);

#[derive(Clone)]
pub struct Notifier {
    anchors: Arc<dyn AnchorClient>,
    interval: Duration,
}

impl Notifier {
    pub fn new(anchors: Arc<dyn AnchorClient>) -> Notifier {
        Notifier {
            anchors,
            interval: DEFAULT_POLL_INTERVAL,
        }
    }

    pub fn with_interval(mut self, interval: Duration) -> Notifier {
        self.interval = interval;
        self
    }

    fn suffix(&self, id: &AnchorId, after: Option<&HashLink>) -> Result<Vec<HashLink>, MessagingError> {
        let links: Vec<HashLink> = self
            .anchors
            .get_versions(id, false)?
            .into_iter()
            .map(|v| v.link)
            .collect();
        let start = match after {
            None => 0,
            Some(cursor) => {
                match links.iter().position(|l| l == cursor) {
                    Some(i) => i + 1,
                    None => return Err(MessagingError::UnknownCursor(cursor.to_string())),
                }
            }
        };
        Ok(links[start..].to_vec())
    }

    /// Confirmed links after `after` (from the start when `None`), in
    /// history order. Blocks until at least one exists or `timeout` passes.
    pub fn poll(
        &self,
        id: &AnchorId,
        after: Option<&HashLink>,
        timeout: Duration,
    ) -> Result<Vec<HashLink>, MessagingError> {
        let deadline = Instant::now() + timeout;
        loop {
            let fresh = self.suffix(id, after)?;
            let now = Instant::now();
            if !fresh.is_empty() || now >= deadline {
                return Ok(fresh);
            }
            thread::sleep(self.interval.min(deadline - now));
        }
    }

    /// A cursor that starts at the current head, so only later versions are
    /// reported.
    pub fn subscribe(&self, id: &AnchorId) -> Result<Subscription, MessagingError> {
        let cursor = self.suffix(id, None)?.pop();
        Ok(Subscription {
            notifier: self.clone(),
            id: id.clone(),
            cursor,
        })
    }
}

/// An independent cursor over one anchor's confirmed history.
pub struct Subscription {
    notifier: Notifier,
    id: AnchorId,
    cursor: Option<HashLink>,
}

impl Subscription {
    pub fn cursor(&self) -> Option<&HashLink> {
        self.cursor.as_ref()
    }

    pub fn next_batch(&mut self, timeout: Duration) -> Result<Vec<HashLink>, MessagingError> {
        let batch = self.notifier.poll(&self.id, self.cursor.as_ref(), timeout)?;
        if let Some(last) = batch.last() {
            self.cursor = Some(last.clone());
        }
        Ok(batch)
    }
}
