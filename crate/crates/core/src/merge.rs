//! Data exchange between partners and the resulting augmented training logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{run_psi_dt, ProtocolConfig, ProtocolError, Role};
use crate::datamodel::{
    format_timestamp, Corpus, DayWindow, EntityId, EntityLog, IpSet, LogEvent, SECONDS_PER_DAY,
};
use crate::netpeer::{MemoryChannel, PeerDataset};
use crate::selection::{CoalitionSet, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeStrategy {
    /// Common source addresses only, no events.
    Intersection,
    /// Counterpart events whose source is common to both sides.
    IntersectionWithData,
    /// Everything.
    UnionWithData,
}

impl MergeStrategy {
    pub const ALL: [MergeStrategy; 3] = [
        MergeStrategy::Intersection,
        MergeStrategy::IntersectionWithData,
        MergeStrategy::UnionWithData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MergeStrategy::Intersection => "intersection",
            MergeStrategy::IntersectionWithData => "intersection-data",
            MergeStrategy::UnionWithData => "union-data",
        }
    }
}

impl fmt::Display for MergeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MergeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MergeStrategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected intersection, intersection-data or union-data)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AcquiredEvent {
    pub event: LogEvent,
    pub provenance: EntityId,
}

/// An entity's own training log plus whatever its partners handed over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedLog {
    base: EntityLog,
    acquired: Vec<AcquiredEvent>,
    /// Source addresses learned to be shared with some partner, without events.
    markers: IpSet,
}

fn triple(e: &LogEvent) -> (Ipv4Addr, i64, u16) {
    (e.source, e.timestamp, e.port)
}

impl AugmentedLog {
    pub fn new(base: EntityLog) -> Self {
        AugmentedLog {
            base,
            acquired: Vec::new(),
            markers: IpSet::new(),
        }
    }

    /// Builds from candidate foreign events, dropping anything already in the
    /// base and keeping one copy per triple (the one from the smallest partner id).
    pub fn assemble(
        base: EntityLog,
        candidates: impl IntoIterator<Item = AcquiredEvent>,
        markers: IpSet,
    ) -> Self {
        let own: BTreeSet<_> = base.events().iter().map(triple).collect();
        let mut best: BTreeMap<(Ipv4Addr, i64, u16), AcquiredEvent> = BTreeMap::new();
        for c in candidates {
            let key = triple(&c.event);
            if own.contains(&key) || c.provenance == *base.id() {
                continue;
            }
            match best.get(&key) {
                Some(prev) if prev.provenance <= c.provenance => {}
                _ => {
                    best.insert(key, c);
                }
            }
        }
        let mut acquired: Vec<AcquiredEvent> = best.into_values().collect();
        acquired.sort_by(|a, b| {
            a.event
                .cmp(&b.event)
                .then_with(|| a.provenance.cmp(&b.provenance))
        });
        AugmentedLog {
            base,
            acquired,
            markers,
        }
    }

    pub fn id(&self) -> &EntityId {
        self.base.id()
    }

    pub fn base(&self) -> &EntityLog {
        &self.base
    }

    pub fn acquired(&self) -> &[AcquiredEvent] {
        &self.acquired
    }

    pub fn markers(&self) -> &IpSet {
        &self.markers
    }

    /// Own events flagged `false`, acquired ones `true`.
    pub fn weighted_events(&self) -> impl Iterator<Item = (&LogEvent, bool)> {
        self.base
            .events()
            .iter()
            .map(|e| (e, false))
            .chain(self.acquired.iter().map(|a| (&a.event, true)))
    }

    /// Writes `contributor_id,source_ip,target_port,timestamp,provenance` rows;
    /// own events carry the entity's own id as provenance.
    pub fn write_csv(&self, out: impl Write) -> Result<(), MergeError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "contributor_id",
            "source_ip",
            "target_port",
            "timestamp",
            "provenance",
        ])?;
        let id = self.id().as_str();
        for (e, prov) in self.base.events().iter().map(|e| (e, id)).chain(
            self.acquired
                .iter()
                .map(|a| (&a.event, a.provenance.as_str())),
        ) {
            w.write_record([
                id,
                &e.source.to_string(),
                &e.port.to_string(),
                &format_timestamp(e.timestamp),
                prov,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// What one side hands the other.
fn shared_events(from: &EntityLog, to: &EntityLog, strategy: MergeStrategy) -> Vec<AcquiredEvent> {
    let keep = |e: &LogEvent| match strategy {
        MergeStrategy::Intersection => false,
        MergeStrategy::IntersectionWithData => to.unique_sources().contains(&e.source),
        MergeStrategy::UnionWithData => true,
    };
    from.events()
        .iter()
        .filter(|e| keep(e))
        .map(|e| AcquiredEvent {
            event: *e,
            provenance: from.id().clone(),
        })
        .collect()
}

/// Exchanges data between two partners. Both logs are expected to be
/// restricted to the training window already.
pub fn merge_pair(
    log_i: &EntityLog,
    log_j: &EntityLog,
    strategy: MergeStrategy,
) -> (AugmentedLog, AugmentedLog) {
    let common = log_i.unique_sources().intersection(log_j.unique_sources());
    let a = AugmentedLog::assemble(
        log_i.clone(),
        shared_events(log_j, log_i, strategy),
        common.clone(),
    );
    let b = AugmentedLog::assemble(log_j.clone(), shared_events(log_i, log_j, strategy), common);
    (a, b)
}

/// One direction of a private exchange: `receiver` learns the common sources
/// together with `sender`'s events for them.
fn private_transfer(
    receiver: &EntityLog,
    sender: &EntityLog,
) -> Result<(IpSet, Vec<AcquiredEvent>), ProtocolError> {
    if receiver.is_empty() || sender.is_empty() {
        return Ok((IpSet::new(), Vec::new()));
    }
    let data = PeerDataset::from_log(sender);
    let (mut cr, mut cs) = MemoryChannel::pair();
    let out = thread::scope(|s| {
        let server = s.spawn(move || {
            run_psi_dt(
                &ProtocolConfig::new(sender.id().as_str()),
                &data.set,
                &data.payloads,
                &mut cs,
                Role::Server,
            )
        });
        let client = run_psi_dt(
            &ProtocolConfig::new(receiver.id().as_str()),
            receiver.unique_sources(),
            &BTreeMap::new(),
            &mut cr,
            Role::Client,
        );
        let server = server.join().expect("PSI-DT server thread panicked");
        client.and_then(|c| server.map(|_| c))
    })?;
    let common: IpSet = out.intersection.iter().map(|(ip, _)| *ip).collect();
    let events = out
        .intersection
        .into_iter()
        .flat_map(|(ip, p)| {
            p.events.into_iter().map(move |(timestamp, port)| LogEvent {
                timestamp,
                source: ip,
                port,
            })
        })
        .map(|event| AcquiredEvent {
            event,
            provenance: sender.id().clone(),
        })
        .collect();
    Ok((common, events))
}

/// Pairwise exchange via two role-swapped PSI-DT sessions. Union needs no
/// private protocol and is exchanged in the clear.
pub fn merge_pair_private(
    log_i: &EntityLog,
    log_j: &EntityLog,
    strategy: MergeStrategy,
) -> Result<(AugmentedLog, AugmentedLog), ProtocolError> {
    if strategy == MergeStrategy::UnionWithData {
        return Ok(merge_pair(log_i, log_j, strategy));
    }
    let (common_i, mut from_j) = private_transfer(log_i, log_j)?;
    let (common_j, mut from_i) = private_transfer(log_j, log_i)?;
    if strategy == MergeStrategy::Intersection {
        from_j.clear();
        from_i.clear();
    }
    Ok((
        AugmentedLog::assemble(log_i.clone(), from_j, common_i),
        AugmentedLog::assemble(log_j.clone(), from_i, common_j),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeOptions {
    pub strategy: MergeStrategy,
    pub training_window: DayWindow,
    pub mode: Mode,
    /// Share only events at least this many days older than the end of the
    /// training window.
    pub min_shared_age_days: Option<u32>,
}

impl MergeOptions {
    pub fn new(strategy: MergeStrategy, training_window: DayWindow) -> Self {
        MergeOptions {
            strategy,
            training_window,
            mode: Mode::Plaintext,
            min_shared_age_days: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MergeOutcome {
    pub logs: BTreeMap<EntityId, AugmentedLog>,
    /// Pairs whose exchange failed, with the reason; their entities keep
    /// whatever the other pairs provided.
    pub failures: Vec<((EntityId, EntityId), String)>,
}

/// Runs the pairwise exchange over every partnered pair and assembles one
/// augmented log per entity of the corpus.
pub fn merge_coalitions(
    corpus: &Corpus,
    coalitions: &CoalitionSet,
    opts: &MergeOptions,
) -> MergeOutcome {
    let origin = corpus.origin();
    let training: BTreeMap<&EntityId, EntityLog> = corpus
        .entities()
        .iter()
        .map(|(id, log)| (id, log.restrict(opts.training_window, origin)))
        .collect();
    let shareable = |log: &EntityLog| match opts.min_shared_age_days {
        None => log.clone(),
        Some(age) => {
            let (start, end) = opts.training_window.time_range(origin);
            let cutoff = end - age as i64 * SECONDS_PER_DAY;
            EntityLog::new(log.id().clone(), log.events_between(start, cutoff).to_vec())
        }
    };
    let pairs = coalitions.pairs();
    let exchange =
        |(a, b): &(EntityId, EntityId)| -> Result<(AugmentedLog, AugmentedLog), ProtocolError> {
            let (Some(la), Some(lb)) = (training.get(a), training.get(b)) else {
                return Ok((
                    AugmentedLog::new(EntityLog::new(a.clone(), vec![])),
                    AugmentedLog::new(EntityLog::new(b.clone(), vec![])),
                ));
            };
            let (sa, sb) = (shareable(la), shareable(lb));
            // each side receives from the other's shareable part
            let (ra, rb) = match opts.mode {
                Mode::Plaintext => merge_pair(&sa, &sb, opts.strategy),
                Mode::Private => merge_pair_private(&sa, &sb, opts.strategy)?,
            };
            Ok((ra, rb))
        };
    // Protocol sessions block on their channels and use the pool internally,
    // so they must not occupy pool workers themselves.
    let results: Vec<_> = match opts.mode {
        Mode::Plaintext => pairs.par_iter().map(exchange).collect(),
        Mode::Private => pairs.iter().map(exchange).collect(),
    };

    let mut candidates: BTreeMap<EntityId, (Vec<AcquiredEvent>, IpSet)> = BTreeMap::new();
    let mut failures = Vec::new();
    for ((a, b), r) in pairs.into_iter().zip(results) {
        match r {
            Ok((ra, rb)) => {
                for (id, aug) in [(a, ra), (b, rb)] {
                    let slot = candidates.entry(id).or_default();
                    slot.0.extend(aug.acquired);
                    slot.1 = slot.1.union(&aug.markers);
                }
            }
            Err(e) => failures.push(((a, b), e.to_string())),
        }
    }
    let logs = training
        .into_iter()
        .map(|(id, base)| {
            let aug = match candidates.remove(id) {
                Some((acq, markers)) => AugmentedLog::assemble(base, acq, markers),
                None => AugmentedLog::new(base),
            };
            (id.clone(), aug)
        })
        .collect();
    MergeOutcome { logs, failures }
}
