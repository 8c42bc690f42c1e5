//! Corpus measurements: daily volumes, common/unique sources, per-day field
//! entropy and inter-arrival times.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::{Corpus, DayIndex, EntityId};

/// Sorted samples with their empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub name: String,
    pub samples: Vec<f64>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl DistributionReport {
    pub fn new(name: impl Into<String>, mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let mean = (n > 0).then(|| samples.iter().sum::<f64>() / n as f64);
        let median = (n > 0).then(|| {
            if n % 2 == 1 {
                samples[n / 2]
            } else {
                (samples[n / 2 - 1] + samples[n / 2]) / 2.0
            }
        });
        DistributionReport {
            name: name.into(),
            samples,
            mean,
            median,
        }
    }

    /// `(value, fraction of samples <= value)` at each distinct value.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let n = self.samples.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.samples.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => out.push((v, frac)),
            }
        }
        out
    }

    /// Writes `value,cdf`.
    pub fn write_cdf_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "cdf"])?;
        for (v, f) in self.cdf() {
            w.write_record([v.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flattened `(day, victim, source, port)` records grouped by day.
fn by_day(corpus: &Corpus) -> BTreeMap<DayIndex, Vec<(&EntityId, Ipv4Addr, u16)>> {
    let mut days: BTreeMap<DayIndex, Vec<(&EntityId, Ipv4Addr, u16)>> = BTreeMap::new();
    for (id, log) in corpus.entities() {
        for e in log.events() {
            days.entry(corpus.day_of(e.timestamp))
                .or_default()
                .push((id, e.source, e.port));
        }
    }
    days
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DailyVolume {
    pub day: DayIndex,
    pub attacks: usize,
    pub unique_sources: usize,
    pub unique_targets: usize,
}

/// One row per day of the corpus span, including empty days.
pub fn daily_volumes(corpus: &Corpus) -> Vec<DailyVolume> {
    let days = by_day(corpus);
    corpus
        .span()
        .days()
        .map(|day| match days.get(&day) {
            None => DailyVolume {
                day,
                attacks: 0,
                unique_sources: 0,
                unique_targets: 0,
            },
            Some(rows) => DailyVolume {
                day,
                attacks: rows.len(),
                unique_sources: rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().len(),
                unique_targets: rows.iter().map(|r| r.0).collect::<BTreeSet<_>>().len(),
            },
        })
        .collect()
}

pub fn write_volumes_csv(rows: &[DailyVolume], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "attacks", "unique_sources", "unique_targets"])?;
    for r in rows {
        w.write_record([
            r.day.0.to_string(),
            r.attacks.to_string(),
            r.unique_sources.to_string(),
            r.unique_targets.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// For one active victim (or source) on one day: counterparts shared with at
/// least one other victim (source) that day, and counterparts seen by it alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommonUniqueRow {
    pub day: DayIndex,
    pub key: String,
    pub common: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonUniqueReport {
    pub victims: Vec<CommonUniqueRow>,
    pub sources: Vec<CommonUniqueRow>,
    pub victim_common: DistributionReport,
    pub victim_unique: DistributionReport,
    pub source_common: DistributionReport,
    pub source_unique: DistributionReport,
}

/// Generic split over a bipartite day graph: `edges` maps each key to the
/// counterparts it touched that day.
fn split<K: Ord + Clone, V: Ord + Clone>(
    edges: &BTreeMap<K, BTreeSet<V>>,
) -> Vec<(K, usize, usize)> {
    let mut touch: BTreeMap<&V, usize> = BTreeMap::new();
    for vs in edges.values() {
        for v in vs {
            *touch.entry(v).or_default() += 1;
        }
    }
    edges
        .iter()
        .map(|(k, vs)| {
            let common = vs.iter().filter(|v| touch[v] > 1).count();
            (k.clone(), common, vs.len() - common)
        })
        .collect()
}

pub fn common_unique_cdf(corpus: &Corpus) -> CommonUniqueReport {
    let days = by_day(corpus);
    let per_day: Vec<(Vec<CommonUniqueRow>, Vec<CommonUniqueRow>)> = days
        .par_iter()
        .map(|(&day, rows)| {
            let mut v2s: BTreeMap<&EntityId, BTreeSet<Ipv4Addr>> = BTreeMap::new();
            let mut s2v: BTreeMap<Ipv4Addr, BTreeSet<&EntityId>> = BTreeMap::new();
            for &(v, s, _) in rows {
                v2s.entry(v).or_default().insert(s);
                s2v.entry(s).or_default().insert(v);
            }
            let vs = split(&v2s)
                .into_iter()
                .map(|(k, common, unique)| CommonUniqueRow {
                    day,
                    key: k.to_string(),
                    common,
                    unique,
                })
                .collect();
            let ss = split(&s2v)
                .into_iter()
                .map(|(k, common, unique)| CommonUniqueRow {
                    day,
                    key: k.to_string(),
                    common,
                    unique,
                })
                .collect();
            (vs, ss)
        })
        .collect();
    let (victims, sources): (Vec<_>, Vec<_>) = per_day.into_iter().unzip();
    let victims: Vec<CommonUniqueRow> = victims.into_iter().flatten().collect();
    let sources: Vec<CommonUniqueRow> = sources.into_iter().flatten().collect();
    let dist = |name: &str, rows: &[CommonUniqueRow], f: fn(&CommonUniqueRow) -> usize| {
        DistributionReport::new(name, rows.iter().map(|r| f(r) as f64).collect())
    };
    CommonUniqueReport {
        victim_common: dist("victim_common", &victims, |r| r.common),
        victim_unique: dist("victim_unique", &victims, |r| r.unique),
        source_common: dist("source_common", &sources, |r| r.common),
        source_unique: dist("source_unique", &sources, |r| r.unique),
        victims,
        sources,
    }
}

/// Writes `kind,day,key,common,unique` with kind `victim` or `source`.
pub fn write_common_unique_csv(report: &CommonUniqueReport, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "day", "key", "common", "unique"])?;
    for (kind, rows) in [("victim", &report.victims), ("source", &report.sources)] {
        for r in rows {
            w.write_record([
                kind,
                &r.day.0.to_string(),
                &r.key,
                &r.common.to_string(),
                &r.unique.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    Port,
    Victim,
    Source,
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "port" => Ok(Field::Port),
            "victim" => Ok(Field::Victim),
            "source" => Ok(Field::Source),
            _ => Err(format!(
                "unknown field {s:?} (expected port, victim or source)"
            )),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Port => "port",
            Field::Victim => "victim",
            Field::Source => "source",
        })
    }
}

/// Shannon entropy in bits of an empirical distribution given by counts.
pub fn entropy_bits(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total = counts.iter().sum::<usize>() as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub field: Field,
    /// `(day, entropy, distinct values)` for days with at least one event.
    pub per_day: Vec<(DayIndex, f64, usize)>,
    pub distribution: DistributionReport,
}

pub fn field_entropy(corpus: &Corpus, field: Field) -> EntropyReport {
    let days = by_day(corpus);
    let per_day: Vec<(DayIndex, f64, usize)> = days
        .par_iter()
        .map(|(&day, rows)| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for (v, s, p) in rows {
                let key = match field {
                    Field::Port => p.to_string(),
                    Field::Victim => v.to_string(),
                    Field::Source => s.to_string(),
                };
                *counts.entry(key).or_default() += 1;
            }
            (day, entropy_bits(counts.values().copied()), counts.len())
        })
        .collect();
    let distribution = DistributionReport::new(
        format!("{field}_entropy"),
        per_day.iter().map(|r| r.1).collect(),
    );
    EntropyReport {
        field,
        per_day,
        distribution,
    }
}

/// Writes `field,day,entropy_bits,distinct`.
pub fn write_entropy_csv(report: &EntropyReport, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field", "day", "entropy_bits", "distinct"])?;
    for (day, h, n) in &report.per_day {
        w.write_record([
            report.field.to_string(),
            day.0.to_string(),
            h.to_string(),
            n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Ip,
    Slash24,
    Slash8,
    All,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [
        Granularity::Ip,
        Granularity::Slash24,
        Granularity::Slash8,
        Granularity::All,
    ];

    pub fn key(self, ip: Ipv4Addr) -> u32 {
        let x = u32::from(ip);
        match self {
            Granularity::Ip => x,
            Granularity::Slash24 => x & 0xFFFF_FF00,
            Granularity::Slash8 => x & 0xFF00_0000,
            Granularity::All => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Ip => "ip",
            Granularity::Slash24 => "slash24",
            Granularity::Slash8 => "slash8",
            Granularity::All => "all",
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| {
                format!("unknown granularity {s:?} (expected ip, slash24, slash8 or all)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterarrivalReport {
    pub granularity: Granularity,
    /// Gaps in seconds pooled over all keys.
    pub gaps: DistributionReport,
    /// Gaps per key, when requested.
    pub per_key: Option<BTreeMap<Ipv4Addr, Vec<i64>>>,
}

/// Consecutive timestamp gaps between attacks sharing a key, over the whole corpus.
pub fn interarrival(
    corpus: &Corpus,
    granularity: Granularity,
    keep_per_key: bool,
) -> InterarrivalReport {
    let mut times: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    for log in corpus.entities().values() {
        for e in log.events() {
            times
                .entry(granularity.key(e.source))
                .or_default()
                .push(e.timestamp);
        }
    }
    let per_key: BTreeMap<Ipv4Addr, Vec<i64>> = times
        .into_par_iter()
        .map(|(k, mut ts)| {
            ts.sort_unstable();
            (
                Ipv4Addr::from(k),
                ts.windows(2).map(|w| w[1] - w[0]).collect::<Vec<i64>>(),
            )
        })
        .filter(|(_, g)| !g.is_empty())
        .collect();
    let gaps = DistributionReport::new(
        format!("interarrival_{}", granularity.name()),
        per_key.values().flatten().map(|&g| g as f64).collect(),
    );
    InterarrivalReport {
        granularity,
        gaps,
        per_key: keep_per_key.then_some(per_key),
    }
}

/// Writes `gap_seconds,gap_hours,cdf`.
pub fn write_interarrival_csv(report: &InterarrivalReport, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gap_seconds", "gap_hours", "cdf"])?;
    for (v, f) in report.gaps.cdf() {
        w.write_record([v.to_string(), (v / 3600.0).to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
