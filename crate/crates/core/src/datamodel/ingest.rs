use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::Serialize;

use super::{Corpus, DataError, EntityId, EntityLog, LogEvent};

const HEADER: [&str; 4] = ["contributor_id", "source_ip", "target_port", "timestamp"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Data lines seen (header excluded).
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
}

/// Reads a `contributor_id,source_ip,target_port,timestamp` log file.
///
/// Malformed lines are skipped and counted. More than half malformed is an error.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<(Corpus, IngestReport), DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(std::io::BufReader::new(file))
}

pub fn ingest_reader(reader: impl Read) -> Result<(Corpus, IngestReport), DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut report = IngestReport::default();
    let mut per_entity: BTreeMap<EntityId, Vec<LogEvent>> = BTreeMap::new();
    let mut ids: BTreeMap<String, EntityId> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.lines += 1;
                report.malformed += 1;
                continue;
            }
        };
        if i == 0 && is_header(&rec) {
            continue;
        }
        report.lines += 1;
        match parse_record(&rec) {
            Some((who, event)) => {
                let id = ids
                    .entry(who.to_owned())
                    .or_insert_with(|| EntityId::new(who))
                    .clone();
                per_entity.entry(id).or_default().push(event);
                report.parsed += 1;
            }
            None => report.malformed += 1,
        }
    }
    if report.lines > 0 && report.malformed * 2 > report.lines {
        return Err(DataError::MostlyMalformed {
            lines: report.lines,
            malformed: report.malformed,
        });
    }
    let corpus = Corpus::from_logs(
        per_entity
            .into_iter()
            .map(|(id, ev)| EntityLog::new(id, ev)),
    );
    Ok((corpus, report))
}

fn is_header(rec: &csv::StringRecord) -> bool {
    rec.len() == 4
        && rec
            .iter()
            .zip(HEADER)
            .all(|(a, b)| a.eq_ignore_ascii_case(b))
}

fn parse_record(rec: &csv::StringRecord) -> Option<(&str, LogEvent)> {
    if rec.len() != 4 {
        return None;
    }
    let who = rec.get(0)?;
    if who.is_empty() {
        return None;
    }
    let source = parse_ipv4_lenient(rec.get(1)?)?;
    let port: u32 = rec.get(2)?.parse().ok()?;
    if !(1..=65535).contains(&port) {
        return None;
    }
    let timestamp = parse_timestamp(rec.get(3)?)?;
    Some((
        who,
        LogEvent {
            timestamp,
            source,
            port: port as u16,
        },
    ))
}

/// Dotted-quad parser that tolerates zero-padded octets (`211.144.119.042`).
pub fn parse_ipv4_lenient(s: &str) -> Option<Ipv4Addr> {
    let mut octets = [0u8; 4];
    let mut parts = s.split('.');
    for o in octets.iter_mut() {
        let p = parts.next()?;
        if p.is_empty() || p.len() > 3 || !p.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        *o = p.parse().ok()?;
    }
    if parts.next().is_some() {
        return None;
    }
    Some(Ipv4Addr::from(octets))
}

/// `YYYY-MM-DD HH:MM:SS` (taken as UTC) or ISO-8601 / RFC 3339.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::from_timestamp(t, 0)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| t.to_string())
}

/// Writes the corpus in the ingestion format, with a header.
pub fn write_csv(corpus: &Corpus, out: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for e in corpus.attack_events() {
        w.write_record([
            e.contributor.as_str(),
            &e.source_ip.to_string(),
            &e.target_port.to_string(),
            &format_timestamp(e.timestamp),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
