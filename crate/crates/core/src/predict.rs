//! EWMA attack forecasting per victim, true-positive accounting and the
//! local/global upper bounds.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Corpus, DayIndex, DayWindow, EntityId, EntityLog, IpSet, LogEvent};
use crate::merge::AugmentedLog;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PredictError {
    #[error("invalid windows: {0}")]
    Windows(&'static str),
    #[error("invalid EWMA parameters: {0}")]
    Params(&'static str),
}

/// Training days `[anchor - train_days, anchor - 1]`, test days
/// `[anchor, anchor + test_days - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindows {
    pub train_days: u32,
    pub test_days: u32,
    pub anchor: DayIndex,
}

impl TimeWindows {
    pub fn new(train_days: u32, test_days: u32, anchor: u32) -> Result<Self, PredictError> {
        if train_days == 0 || test_days == 0 {
            return Err(PredictError::Windows(
                "train_days and test_days must be at least 1",
            ));
        }
        if anchor <= train_days {
            return Err(PredictError::Windows(
                "anchor leaves no room for the training window",
            ));
        }
        Ok(TimeWindows {
            train_days,
            test_days,
            anchor: DayIndex(anchor),
        })
    }

    pub fn training(&self) -> DayWindow {
        DayWindow::new(self.anchor.0 - self.train_days, self.anchor.0 - 1)
    }

    pub fn testing(&self) -> DayWindow {
        DayWindow::new(self.anchor.0, self.anchor.0 + self.test_days - 1)
    }

    /// Position `d` in `1..=train_days` of a training day, or `None` outside.
    fn slot(&self, day: DayIndex) -> Option<u32> {
        self.training()
            .contains(day)
            .then(|| day.0 - (self.anchor.0 - self.train_days) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    /// 1 if the source attacked on that day.
    #[default]
    Binary,
    /// Number of events that day.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwmaParams {
    pub alpha: f64,
    pub signal: Signal,
    pub threshold_tau: f64,
    pub acquired_weight: f64,
    /// Keep at most this many top-scored sources.
    pub max_blacklist: Option<usize>,
}

impl Default for EwmaParams {
    fn default() -> Self {
        EwmaParams {
            alpha: 0.9,
            signal: Signal::Binary,
            threshold_tau: 0.0,
            acquired_weight: 1.0,
            max_blacklist: None,
        }
    }
}

impl EwmaParams {
    pub fn with_alpha(alpha: f64) -> Self {
        EwmaParams {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PredictError::Params("alpha must be in (0, 1]"));
        }
        if !(self.threshold_tau >= 0.0) {
            return Err(PredictError::Params("threshold must be >= 0"));
        }
        if !(self.acquired_weight > 0.0 && self.acquired_weight <= 1.0) {
            return Err(PredictError::Params("acquired weight must be in (0, 1]"));
        }
        if self.max_blacklist == Some(0) {
            return Err(PredictError::Params("blacklist cap must be at least 1"));
        }
        Ok(())
    }

    /// Weight of training slot `d` (1-based, `train_days` is the most recent).
    pub fn weight(&self, d: u32, train_days: u32) -> f64 {
        self.alpha * (1.0 - self.alpha).powi((train_days - d) as i32)
    }
}

/// Anything that yields events flagged as own (`false`) or acquired (`true`).
pub trait EventSource {
    fn flagged_events(&self) -> Box<dyn Iterator<Item = (&LogEvent, bool)> + '_>;
}

impl EventSource for EntityLog {
    fn flagged_events(&self) -> Box<dyn Iterator<Item = (&LogEvent, bool)> + '_> {
        Box::new(self.events().iter().map(|e| (e, false)))
    }
}

impl EventSource for AugmentedLog {
    fn flagged_events(&self) -> Box<dyn Iterator<Item = (&LogEvent, bool)> + '_> {
        Box::new(self.weighted_events())
    }
}

/// Per-source EWMA score over the training window. Events outside it are ignored.
pub fn ewma_scores(
    log: &impl EventSource,
    origin: i64,
    windows: &TimeWindows,
    params: &EwmaParams,
) -> BTreeMap<Ipv4Addr, f64> {
    // per (source, slot): own and acquired signal
    let mut daily: BTreeMap<(Ipv4Addr, u32), (f64, f64)> = BTreeMap::new();
    for (e, acquired) in log.flagged_events() {
        let Some(d) = windows.slot(DayIndex::of(e.timestamp, origin)) else {
            continue;
        };
        let slot = daily.entry((e.source, d)).or_default();
        let v = if acquired { &mut slot.1 } else { &mut slot.0 };
        match params.signal {
            Signal::Binary => *v = 1.0,
            Signal::Count => *v += 1.0,
        }
    }
    let mut scores: BTreeMap<Ipv4Addr, f64> = BTreeMap::new();
    for ((ip, d), (own, acq)) in daily {
        let x = match params.signal {
            Signal::Binary => own.max(acq * params.acquired_weight),
            Signal::Count => own + acq * params.acquired_weight,
        };
        *scores.entry(ip).or_default() += params.weight(d, windows.train_days) * x;
    }
    scores
}

/// Sources scoring above the threshold, optionally capped to the best
/// `max_blacklist` (ties toward the lower address).
pub fn predict_blacklist(scores: &BTreeMap<Ipv4Addr, f64>, params: &EwmaParams) -> IpSet {
    let mut hits: Vec<(Ipv4Addr, f64)> = scores
        .iter()
        .filter(|(_, &s)| s > params.threshold_tau)
        .map(|(ip, s)| (*ip, *s))
        .collect();
    if let Some(cap) = params.max_blacklist {
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(cap);
    }
    hits.into_iter().map(|(ip, _)| ip).collect()
}

/// Distinct sources attacking the victim during the test window.
pub fn test_attackers(log: &EntityLog, origin: i64, windows: &TimeWindows) -> IpSet {
    let (start, end) = windows.testing().time_range(origin);
    log.events_between(start, end)
        .iter()
        .map(|e| e.source)
        .collect()
}

/// Distinct sources seen during the training window.
pub fn training_attackers(log: &EntityLog, origin: i64, windows: &TimeWindows) -> IpSet {
    let (start, end) = windows.training().time_range(origin);
    log.events_between(start, end)
        .iter()
        .map(|e| e.source)
        .collect()
}

/// Correct predictions, counted against the victim's own test-window events.
pub fn count_tp(predicted: &IpSet, log: &EntityLog, origin: i64, windows: &TimeWindows) -> usize {
    predicted.intersection_count(&test_attackers(log, origin, windows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct UpperBounds {
    pub lub: usize,
    pub gub: usize,
}

/// Bounds given the union of every considered victim's training sources.
pub fn upper_bounds_with(
    log: &EntityLog,
    global_training: &IpSet,
    origin: i64,
    windows: &TimeWindows,
) -> UpperBounds {
    let test = test_attackers(log, origin, windows);
    UpperBounds {
        lub: training_attackers(log, origin, windows).intersection_count(&test),
        gub: global_training.intersection_count(&test),
    }
}

/// Bounds for `victim` with every corpus entity counted toward the global one.
pub fn upper_bounds(
    victim: &EntityId,
    corpus: &Corpus,
    windows: &TimeWindows,
) -> Option<UpperBounds> {
    let log = corpus.entity(victim)?;
    let sets: Vec<IpSet> = corpus
        .entities()
        .values()
        .map(|l| training_attackers(l, corpus.origin(), windows))
        .collect();
    let global = IpSet::union_all(&sets);
    Some(upper_bounds_with(log, &global, corpus.origin(), windows))
}

/// `(tp_collab - tp) / tp`, or `None` when there is no baseline.
pub fn improvement(tp: usize, tp_collab: usize) -> Option<f64> {
    (tp > 0).then(|| (tp_collab as f64 - tp as f64) / tp as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionOutcome {
    pub victim: EntityId,
    pub day: DayIndex,
    pub predicted: usize,
    pub tp: usize,
    pub tp_collab: usize,
    pub bounds: UpperBounds,
}

pub fn write_outcomes_csv<'a>(
    rows: impl IntoIterator<Item = &'a PredictionOutcome>,
    out: impl Write,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["victim", "day", "tp", "tp_collab", "lub", "gub"])?;
    for r in rows {
        w.write_record([
            r.victim.as_str(),
            &r.day.0.to_string(),
            &r.tp.to_string(),
            &r.tp_collab.to_string(),
            &r.bounds.lub.to_string(),
            &r.bounds.gub.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
