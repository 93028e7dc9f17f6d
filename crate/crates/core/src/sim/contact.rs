use serde::{Deserialize, Serialize};

use super::Endpoint;

pub const DEFAULT_DEBOUNCE_TICKS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub tick: u64,
    pub endpoint: Endpoint,
}

/// Number of distinct wall contacts in time-ordered `events`.
///
/// An event on the same endpoint within `window` ticks of that endpoint's
/// previous event continues the same contact.
pub fn detect_wall_contact(events: &[ContactEvent], window: u64) -> usize {
    let mut last: [Option<u64>; 2] = [None, None];
    let mut count = 0;
    for e in events {
        let slot = &mut last[e.endpoint as usize];
        match *slot {
            Some(prev) if e.tick.saturating_sub(prev) <= window => {}
            _ => count += 1,
        }
        *slot = Some(e.tick);
    }
    count
}

/// Incremental form of [`detect_wall_contact`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContactCounter {
    pub window: u64,
    pub count: usize,
    last: [Option<u64>; 2],
}

impl ContactCounter {
    pub fn new(window: u64) -> Self {
        Self {
            window,
            count: 0,
            last: [None, None],
        }
    }

    /// Register an event; true when it starts a new contact.
    pub fn record(&mut self, e: ContactEvent) -> bool {
        let slot = &mut self.last[e.endpoint as usize];
        let new = !matches!(*slot, Some(prev) if e.tick.saturating_sub(prev) <= self.window);
        *slot = Some(e.tick);
        if new {
            self.count += 1;
        }
        new
    }
}
