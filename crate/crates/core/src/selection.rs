//! Benefit metrics between entity pairs and the policies that turn a benefit
//! matrix into coalitions.
//!
//! Every metric is a function of `|S_i ∩ S_j|`, `|S_i|`, `|S_j|` and the
//! agreed universe size `N`. Pearson and cosine are evaluated on the binary
//! membership vectors over the universe, where they reduce to closed forms in
//! those four numbers. Private mode obtains the intersection size from a
//! PSI-CA run and the set sizes from its handshake.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{run_psi_ca, ProtocolConfig, ProtocolError, Role};
use crate::datamodel::{Corpus, DayWindow, EntityId, IpSet};
use crate::netpeer::MemoryChannel;

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error(
        "Pearson correlation is undefined for a constant vector (|S| = {size}, N = {universe})"
    )]
    Degenerate { size: u64, universe: u64 },
    #[error("benefit metrics need nonempty sets")]
    EmptySet,
    #[error("universe of {universe} addresses cannot hold a union of {union}")]
    UniverseTooSmall { universe: u64, union: u64 },
    #[error("benefit matrix is empty")]
    EmptyMatrix,
    #[error("invalid partnership policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    IntersectionSize,
    Jaccard,
    Pearson,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::IntersectionSize,
        Metric::Jaccard,
        Metric::Pearson,
        Metric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::IntersectionSize => "intersection-size",
            Metric::Jaccard => "jaccard",
            Metric::Pearson => "pearson",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown metric {s:?} (expected intersection-size, jaccard, pearson or cosine)"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Private,
    #[default]
    Plaintext,
}

/// Binary membership vector of a set over a universe of `N` addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorView {
    pub universe_size: u64,
    pub member_count: u64,
}

impl VectorView {
    pub fn mean(&self) -> f64 {
        self.member_count as f64 / self.universe_size as f64
    }

    /// Population standard deviation of the 0/1 entries.
    pub fn deviation(&self) -> f64 {
        let m = self.mean();
        (m * (1.0 - m)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitScore {
    pub pair: (EntityId, EntityId),
    pub metric: Metric,
    pub value: f64,
}

/// Evaluates `metric` from intersection size, both set sizes and the universe size.
pub fn score_from_counts(
    metric: Metric,
    inter: u64,
    a: u64,
    b: u64,
    universe: u64,
) -> Result<f64, SelectionError> {
    if a == 0 || b == 0 {
        return Err(SelectionError::EmptySet);
    }
    Ok(match metric {
        Metric::IntersectionSize => inter as f64,
        Metric::Jaccard => inter as f64 / (a + b - inter) as f64,
        Metric::Cosine => inter as f64 / ((a as f64) * (b as f64)).sqrt(),
        Metric::Pearson => {
            let union = a + b - inter;
            if union > universe {
                return Err(SelectionError::UniverseTooSmall { universe, union });
            }
            for size in [a, b] {
                if size == universe {
                    return Err(SelectionError::Degenerate { size, universe });
                }
            }
            let n = universe as f64;
            let (af, bf) = (a as f64, b as f64);
            (n * inter as f64 - af * bf) / (af * (n - af) * bf * (n - bf)).sqrt()
        }
    })
}

/// Runs PSI-CA between two in-process parties and returns `(|∩|, |S_i|, |S_j|)`
/// as learned by the initiating side.
pub fn private_counts(a: &IpSet, b: &IpSet) -> Result<(u64, u64, u64), SelectionError> {
    if a.is_empty() || b.is_empty() {
        return Err(SelectionError::EmptySet);
    }
    let (mut ca, mut cb) = MemoryChannel::pair();
    let out = thread::scope(|s| {
        let server =
            s.spawn(move || run_psi_ca(&ProtocolConfig::new("j"), b, &mut cb, Role::Server));
        let client = run_psi_ca(&ProtocolConfig::new("i"), a, &mut ca, Role::Client);
        let server = server.join().expect("PSI-CA server thread panicked");
        client.and_then(|c| server.map(|_| c))
    })?;
    Ok((
        out.cardinality.unwrap_or(0),
        a.len() as u64,
        out.peer_set_size as u64,
    ))
}

/// Benefit of sharing between two entities under `metric`.
pub fn compute_benefit(
    metric: Metric,
    entity_i: (&EntityId, &IpSet),
    entity_j: (&EntityId, &IpSet),
    universe_size: u64,
    mode: Mode,
) -> Result<BenefitScore, SelectionError> {
    let (inter, a, b) = match mode {
        Mode::Plaintext => {
            if entity_i.1.is_empty() || entity_j.1.is_empty() {
                return Err(SelectionError::EmptySet);
            }
            (
                entity_i.1.intersection_count(entity_j.1) as u64,
                entity_i.1.len() as u64,
                entity_j.1.len() as u64,
            )
        }
        Mode::Private => private_counts(entity_i.1, entity_j.1)?,
    };
    Ok(BenefitScore {
        pair: (entity_i.0.clone(), entity_j.0.clone()),
        metric,
        value: score_from_counts(metric, inter, a, b, universe_size)?,
    })
}

/// Pairwise scores over a set of entities. Pairs are stored with the smaller
/// id first; pairs whose score is undefined are kept aside in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenefitMatrix {
    pub metric: Metric,
    pub entities: Vec<EntityId>,
    scores: BTreeMap<(EntityId, EntityId), f64>,
    missing: BTreeMap<(EntityId, EntityId), String>,
}

fn ordered(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl BenefitMatrix {
    /// Scores every unordered pair of `sets`.
    pub fn from_sets(
        sets: &[(EntityId, IpSet)],
        metric: Metric,
        universe_size: u64,
        mode: Mode,
    ) -> Result<BenefitMatrix, SelectionError> {
        let mut sorted: Vec<&(EntityId, IpSet)> = sets.iter().collect();
        sorted.sort_by(|x, y| x.0.cmp(&y.0));
        sorted.dedup_by(|x, y| x.0 == y.0);
        let pairs: Vec<(usize, usize)> = (0..sorted.len())
            .flat_map(|i| (i + 1..sorted.len()).map(move |j| (i, j)))
            .collect();
        let score = |&(i, j): &(usize, usize)| {
            let (a, b) = (sorted[i], sorted[j]);
            compute_benefit(metric, (&a.0, &a.1), (&b.0, &b.1), universe_size, mode)
                .map(|s| s.value)
        };
        // Private sessions block on channels while using the pool internally;
        // running them on pool workers could starve it.
        let results: Vec<Result<f64, SelectionError>> = match mode {
            Mode::Plaintext => pairs.par_iter().map(score).collect(),
            Mode::Private => pairs.iter().map(score).collect(),
        };
        let mut scores = BTreeMap::new();
        let mut missing = BTreeMap::new();
        for ((i, j), r) in pairs.into_iter().zip(results) {
            let key = (sorted[i].0.clone(), sorted[j].0.clone());
            match r {
                Ok(v) => {
                    scores.insert(key, v);
                }
                Err(SelectionError::Protocol(e)) => return Err(SelectionError::Protocol(e)),
                Err(e) => {
                    missing.insert(key, e.to_string());
                }
            }
        }
        Ok(BenefitMatrix {
            metric,
            entities: sorted.into_iter().map(|(id, _)| id.clone()).collect(),
            scores,
            missing,
        })
    }

    pub fn get(&self, a: &EntityId, b: &EntityId) -> Option<f64> {
        self.scores.get(&ordered(a, b)).copied()
    }

    /// Finite scores, smaller id first.
    pub fn scores(&self) -> &BTreeMap<(EntityId, EntityId), f64> {
        &self.scores
    }

    /// Pairs left unscored, with the reason.
    pub fn missing(&self) -> &BTreeMap<(EntityId, EntityId), String> {
        &self.missing
    }

    pub fn pair_count(&self) -> usize {
        self.scores.len() + self.missing.len()
    }

    /// Writes `entity_a,entity_b,metric,value` rows for the finite scores.
    pub fn write_csv(&self, out: impl Write) -> Result<(), SelectionError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SelectionError::Io(std::io::Error::other(e));
        w.write_record(["entity_a", "entity_b", "metric", "value"])
            .map_err(io)?;
        for ((a, b), v) in &self.scores {
            w.write_record([a.as_str(), b.as_str(), self.metric.name(), &v.to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores all pairs among `ids`, each restricted to `training_window`.
pub fn build_benefit_matrix(
    corpus: &Corpus,
    ids: &[EntityId],
    metric: Metric,
    training_window: DayWindow,
    universe_size: Option<u64>,
    mode: Mode,
) -> Result<BenefitMatrix, SelectionError> {
    let n = universe_size.unwrap_or(corpus.universe().len() as u64);
    let sets: Vec<(EntityId, IpSet)> = ids
        .iter()
        .filter_map(|id| corpus.entity(id))
        .map(|log| {
            (
                log.id().clone(),
                log.restrict(training_window, corpus.origin())
                    .unique_sources()
                    .clone(),
            )
        })
        .collect();
    BenefitMatrix::from_sets(&sets, metric, n, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Threshold,
    Maximization,
    Hybrid,
    GlobalTopPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartnershipPolicy {
    pub kind: PolicyKind,
    pub threshold: Option<f64>,
    pub k: Option<usize>,
    pub pair_budget: Option<usize>,
}

impl PartnershipPolicy {
    pub fn threshold(t: f64) -> Self {
        PartnershipPolicy {
            kind: PolicyKind::Threshold,
            threshold: Some(t),
            k: None,
            pair_budget: None,
        }
    }

    pub fn maximization(k: usize) -> Self {
        PartnershipPolicy {
            kind: PolicyKind::Maximization,
            threshold: None,
            k: Some(k),
            pair_budget: None,
        }
    }

    pub fn hybrid(t: f64, k: usize) -> Self {
        PartnershipPolicy {
            kind: PolicyKind::Hybrid,
            threshold: Some(t),
            k: Some(k),
            pair_budget: None,
        }
    }

    pub fn global_top_pairs(budget: usize) -> Self {
        PartnershipPolicy {
            kind: PolicyKind::GlobalTopPairs,
            threshold: None,
            k: None,
            pair_budget: Some(budget),
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let need_t = matches!(self.kind, PolicyKind::Threshold | PolicyKind::Hybrid);
        let need_k = matches!(self.kind, PolicyKind::Maximization | PolicyKind::Hybrid);
        if need_t && !self.threshold.is_some_and(|t| !t.is_nan()) {
            return Err(SelectionError::InvalidPolicy("threshold required"));
        }
        if need_k && !self.k.is_some_and(|k| k >= 1) {
            return Err(SelectionError::InvalidPolicy("k >= 1 required"));
        }
        if self.kind == PolicyKind::GlobalTopPairs && self.pair_budget.is_none() {
            return Err(SelectionError::InvalidPolicy("pair budget required"));
        }
        Ok(())
    }
}

/// Symmetric partner relation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoalitionSet {
    partners: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

impl CoalitionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the pair in both directions; self-pairs are ignored.
    pub fn add_pair(&mut self, a: &EntityId, b: &EntityId) {
        if a == b {
            return;
        }
        self.partners
            .entry(a.clone())
            .or_default()
            .insert(b.clone());
        self.partners
            .entry(b.clone())
            .or_default()
            .insert(a.clone());
    }

    pub fn partners_of(&self, id: &EntityId) -> Option<&BTreeSet<EntityId>> {
        self.partners.get(id)
    }

    pub fn members(&self) -> impl Iterator<Item = (&EntityId, &BTreeSet<EntityId>)> {
        self.partners.iter()
    }

    pub fn is_member(&self, id: &EntityId) -> bool {
        self.partners.get(id).is_some_and(|p| !p.is_empty())
    }

    /// Each unordered pair once, smaller id first.
    pub fn pairs(&self) -> Vec<(EntityId, EntityId)> {
        self.partners
            .iter()
            .flat_map(|(a, ps)| {
                ps.iter()
                    .filter(move |b| a < *b)
                    .map(move |b| (a.clone(), b.clone()))
            })
            .collect()
    }

    pub fn pair_count(&self) -> usize {
        self.partners.values().map(|p| p.len()).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.partners.is_empty()
    }
}

/// Pairs by descending score, ties by ascending id pair.
fn ranked(
    pairs: impl Iterator<Item = ((EntityId, EntityId), f64)>,
) -> Vec<((EntityId, EntityId), f64)> {
    let mut v: Vec<_> = pairs.collect();
    v.sort_by(|(pa, va), (pb, vb)| vb.total_cmp(va).then_with(|| pa.cmp(pb)));
    v
}

pub fn establish_partnerships(
    matrix: &BenefitMatrix,
    policy: &PartnershipPolicy,
) -> Result<CoalitionSet, SelectionError> {
    policy.validate()?;
    if matrix.entities.len() < 2 {
        return Err(SelectionError::EmptyMatrix);
    }
    let mut out = CoalitionSet::new();
    let all = || matrix.scores.iter().map(|(p, &v)| (p.clone(), v));
    if matches!(policy.kind, PolicyKind::Threshold | PolicyKind::Hybrid) {
        let t = policy.threshold.expect("validated");
        for ((a, b), v) in all() {
            if v >= t {
                out.add_pair(&a, &b);
            }
        }
    }
    if matches!(policy.kind, PolicyKind::Maximization | PolicyKind::Hybrid) {
        let k = policy.k.expect("validated");
        let mut per_entity: BTreeMap<&EntityId, Vec<(f64, &EntityId)>> = BTreeMap::new();
        for ((a, b), v) in matrix.scores.iter() {
            per_entity.entry(a).or_default().push((*v, b));
            per_entity.entry(b).or_default().push((*v, a));
        }
        for (me, mut cands) in per_entity {
            cands.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
            for (_, other) in cands.into_iter().take(k) {
                out.add_pair(me, other);
            }
        }
    }
    if policy.kind == PolicyKind::GlobalTopPairs {
        let budget = policy.pair_budget.expect("validated");
        for ((a, b), _) in ranked(all()).into_iter().take(budget) {
            out.add_pair(&a, &b);
        }
    }
    Ok(out)
}
