//! Attack-log schema: events, per-entity logs, the corpus, and day bucketing.
//!
//! Timestamps are UTC seconds since the Unix epoch. Days are counted from the
//! UTC midnight that precedes the corpus' first event, starting at 1.

mod filter;
mod ingest;
mod ipset;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use filter::{
    filter_invalid, filter_low_contributors, is_bogon, FilterReport, LowContributorReport,
    DEFAULT_MIN_SINGLE_DAY_EVENTS,
};
pub use ingest::{
    format_timestamp, ingest_csv, ingest_reader, parse_ipv4_lenient, parse_timestamp, write_csv,
    IngestReport,
};
pub use ipset::IpSet;
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticParams};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "{malformed} of {lines} lines are malformed; input is probably not in the expected format"
    )]
    MostlyMalformed { lines: usize, malformed: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
}

/// Opaque contributor identifier (a victim `V_i`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(Arc<str>);

impl EntityId {
    pub fn new(id: impl AsRef<str>) -> Self {
        EntityId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId::new(s)
    }
}

/// One row of a contributor's log.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttackEvent {
    pub contributor: EntityId,
    pub source_ip: Ipv4Addr,
    pub target_port: u16,
    /// UTC seconds.
    pub timestamp: i64,
}

impl AttackEvent {
    pub fn log_event(&self) -> LogEvent {
        LogEvent {
            timestamp: self.timestamp,
            source: self.source_ip,
            port: self.target_port,
        }
    }
}

/// An event as stored inside an [`EntityLog`]; the contributor is implicit.
///
/// Ordering is by timestamp first, which is the order logs are kept in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LogEvent {
    pub timestamp: i64,
    pub source: Ipv4Addr,
    pub port: u16,
}

/// Day number `t`, 1-based, relative to a corpus origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayIndex(pub u32);

impl DayIndex {
    pub fn of(timestamp: i64, origin: i64) -> DayIndex {
        DayIndex(((timestamp - origin).div_euclid(SECONDS_PER_DAY) + 1) as u32)
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Inclusive range of days. Empty when `first > last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub first: DayIndex,
    pub last: DayIndex,
}

impl DayWindow {
    pub fn new(first: u32, last: u32) -> Self {
        DayWindow {
            first: DayIndex(first),
            last: DayIndex(last),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.first > self.last
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.last.0 - self.first.0 + 1) as usize
        }
    }

    pub fn contains(&self, day: DayIndex) -> bool {
        self.first <= day && day <= self.last
    }

    /// Timestamp range `[start, end)` covered by this window.
    pub fn time_range(&self, origin: i64) -> (i64, i64) {
        let start = origin + (self.first.0 as i64 - 1) * SECONDS_PER_DAY;
        let end = origin + self.last.0 as i64 * SECONDS_PER_DAY;
        (start, end.max(start))
    }

    pub fn days(&self) -> impl Iterator<Item = DayIndex> {
        let (a, b) = (self.first.0, self.last.0);
        (a..=b).map(DayIndex)
    }
}

/// Per-entity log `L_i` with its derived source set `S_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityLog {
    id: EntityId,
    events: Vec<LogEvent>,
    unique_sources: IpSet,
}

impl EntityLog {
    pub fn new(id: EntityId, mut events: Vec<LogEvent>) -> Self {
        events.sort_unstable();
        let unique_sources = IpSet::from_iter(events.iter().map(|e| e.source));
        EntityLog {
            id,
            events,
            unique_sources,
        }
    }

    pub fn id(&self) -> &EntityId {
        &self.id
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn unique_sources(&self) -> &IpSet {
        &self.unique_sources
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `start <= timestamp < end`; relies on the sorted invariant.
    pub fn events_between(&self, start: i64, end: i64) -> &[LogEvent] {
        let lo = self.events.partition_point(|e| e.timestamp < start);
        let hi = self.events.partition_point(|e| e.timestamp < end);
        &self.events[lo..hi.max(lo)]
    }

    /// The log restricted to a day window.
    pub fn restrict(&self, window: DayWindow, origin: i64) -> EntityLog {
        if window.is_empty() {
            return EntityLog::new(self.id.clone(), Vec::new());
        }
        let (start, end) = window.time_range(origin);
        EntityLog::new(self.id.clone(), self.events_between(start, end).to_vec())
    }

    pub fn distinct_days(&self, origin: i64) -> usize {
        let mut days: Vec<DayIndex> = self
            .events
            .iter()
            .map(|e| DayIndex::of(e.timestamp, origin))
            .collect();
        days.dedup();
        days.len()
    }

    pub fn into_events(self) -> Vec<LogEvent> {
        self.events
    }
}

/// All entity logs plus the time origin and global source universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    entities: BTreeMap<EntityId, EntityLog>,
    origin: i64,
    days: u32,
    universe: IpSet,
}

impl Corpus {
    /// Builds a corpus whose origin is the UTC midnight before the earliest event.
    pub fn from_logs(logs: impl IntoIterator<Item = EntityLog>) -> Corpus {
        let logs: Vec<EntityLog> = logs.into_iter().filter(|l| !l.is_empty()).collect();
        let first = logs
            .iter()
            .filter_map(|l| l.events.first())
            .map(|e| e.timestamp)
            .min();
        let origin = first
            .map(|t| t.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY)
            .unwrap_or(0);
        Corpus::with_origin(logs, origin)
    }

    /// Builds a corpus on a fixed origin; the day count extends to the latest event.
    pub fn with_origin(logs: impl IntoIterator<Item = EntityLog>, origin: i64) -> Corpus {
        let mut entities = BTreeMap::new();
        for log in logs {
            if log.is_empty() {
                continue;
            }
            match entities.entry(log.id.clone()) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(log);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let existing: &mut EntityLog = o.get_mut();
                    let mut events = std::mem::take(&mut existing.events);
                    events.extend(log.events);
                    *existing = EntityLog::new(log.id, events);
                }
            }
        }
        let last = entities
            .values()
            .filter_map(|l| l.events.last())
            .map(|e| e.timestamp)
            .max();
        let days = last.map(|t| DayIndex::of(t, origin).0).unwrap_or(0);
        let universe = IpSet::union_all(entities.values().map(|l| &l.unique_sources));
        Corpus {
            entities,
            origin,
            days,
            universe,
        }
    }

    /// Rebuilds with the same origin and at least the same day span.
    pub(crate) fn rebuild(&self, logs: impl IntoIterator<Item = EntityLog>) -> Corpus {
        let mut c = Corpus::with_origin(logs, self.origin);
        c.days = c.days.max(self.days);
        c
    }

    pub fn empty() -> Corpus {
        Corpus::from_logs(Vec::new())
    }

    pub fn entities(&self) -> &BTreeMap<EntityId, EntityLog> {
        &self.entities
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityLog> {
        self.entities.get(id)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.keys()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// UTC second of the start of day 1.
    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// Number of days `T` covered.
    pub fn days(&self) -> u32 {
        self.days
    }

    pub fn span(&self) -> DayWindow {
        DayWindow::new(1, self.days)
    }

    /// Distinct source IPs over all entities (size `N`).
    pub fn universe(&self) -> &IpSet {
        &self.universe
    }

    pub fn event_count(&self) -> usize {
        self.entities.values().map(|l| l.len()).sum()
    }

    pub fn day_of(&self, timestamp: i64) -> DayIndex {
        DayIndex::of(timestamp, self.origin)
    }

    /// A corpus made of the named entities only, on the same origin and span.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a EntityId>) -> Corpus {
        self.rebuild(
            ids.into_iter()
                .filter_map(|id| self.entities.get(id).cloned()),
        )
    }

    /// Flattens to contributor-tagged events, entity by entity.
    pub fn attack_events(&self) -> impl Iterator<Item = AttackEvent> + '_ {
        self.entities.values().flat_map(|log| {
            log.events.iter().map(move |e| AttackEvent {
                contributor: log.id.clone(),
                source_ip: e.source,
                target_port: e.port,
                timestamp: e.timestamp,
            })
        })
    }
}

/// Sources seen by one entity on one day, with per-source event counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayBucket {
    pub day: DayIndex,
    /// Sorted by address.
    pub sources: Vec<(Ipv4Addr, u32)>,
}

impl DayBucket {
    pub fn event_count(&self) -> u64 {
        self.sources.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn ips(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.sources.iter().map(|&(ip, _)| ip)
    }
}

/// Groups a log's events in `window` by UTC day. Days without events are omitted.
pub fn bucket_by_day(log: &EntityLog, origin: i64, window: DayWindow) -> Vec<DayBucket> {
    if window.is_empty() {
        return Vec::new();
    }
    let (start, end) = window.time_range(origin);
    let mut per_day: BTreeMap<DayIndex, BTreeMap<Ipv4Addr, u32>> = BTreeMap::new();
    for e in log.events_between(start, end) {
        *per_day
            .entry(DayIndex::of(e.timestamp, origin))
            .or_default()
            .entry(e.source)
            .or_insert(0) += 1;
    }
    per_day
        .into_iter()
        .map(|(day, m)| DayBucket {
            day,
            sources: m.into_iter().collect(),
        })
        .collect()
}
