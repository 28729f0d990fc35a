use std::collections::BTreeMap;

use crate::message::Advert;
use crate::queue::Micros;

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    /// First hop out of the active BS first, the passive BS last.
    pub route: Vec<usize>,
    pub battery: f64,
    pub timestamp: Micros,
}

/// Kept by the active BS; keyed by passive BS.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HandoverTable {
    entries: BTreeMap<usize, TableEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvertOutcome {
    Stored,
    Stale,
    Malformed,
}

impl HandoverTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, bs: usize) -> Option<&TableEntry> {
        self.entries.get(&bs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &TableEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Entries refreshed no earlier than `since`.
    pub fn fresh(&self, since: Micros) -> impl Iterator<Item = (usize, &TableEntry)> {
        self.iter().filter(move |(_, e)| e.timestamp >= since)
    }
}

/// Store the reversed traversal path of an advert that reached the active BS.
pub fn process_advert(table: &mut HandoverTable, advert: &Advert) -> AdvertOutcome {
    if advert.path.first() != Some(&advert.origin) || !advert.battery.is_finite() {
        return AdvertOutcome::Malformed;
    }
    if let Some(old) = table.entries.get(&advert.origin) {
        if advert.timestamp <= old.timestamp {
            return AdvertOutcome::Stale;
        }
    }
    let route: Vec<usize> = advert.path.iter().rev().copied().collect();
    table.entries.insert(advert.origin, TableEntry { route, battery: advert.battery, timestamp: advert.timestamp });
    AdvertOutcome::Stored
}
