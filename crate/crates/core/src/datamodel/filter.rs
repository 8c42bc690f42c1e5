use std::net::Ipv4Addr;

use serde::Serialize;

use super::{Corpus, EntityId, EntityLog};

/// Single-day contributors need at least this many events to be kept.
pub const DEFAULT_MIN_SINGLE_DAY_EVENTS: usize = 20;

/// Reserved and non-routable IPv4 blocks (RFC 1918, RFC 5735, plus the
/// RFC 6598 shared address space).
const BOGONS: [(u32, u8); 15] = [
    (0x0000_0000, 8),  // 0.0.0.0/8 "this network"
    (0x0A00_0000, 8),  // 10.0.0.0/8 private
    (0x6440_0000, 10), // 100.64.0.0/10 carrier-grade NAT
    (0x7F00_0000, 8),  // 127.0.0.0/8 loopback
    (0xA9FE_0000, 16), // 169.254.0.0/16 link local
    (0xAC10_0000, 12), // 172.16.0.0/12 private
    (0xC000_0000, 24), // 192.0.0.0/24 IETF protocol assignments
    (0xC000_0200, 24), // 192.0.2.0/24 TEST-NET-1
    (0xC058_6300, 24), // 192.88.99.0/24 6to4 relay anycast
    (0xC0A8_0000, 16), // 192.168.0.0/16 private
    (0xC612_0000, 15), // 198.18.0.0/15 benchmarking
    (0xC633_6400, 24), // 198.51.100.0/24 TEST-NET-2
    (0xCB00_7100, 24), // 203.0.113.0/24 TEST-NET-3
    (0xE000_0000, 4),  // 224.0.0.0/4 multicast
    (0xF000_0000, 4),  // 240.0.0.0/4 reserved, includes broadcast
];

pub fn is_bogon(ip: Ipv4Addr) -> bool {
    let x = u32::from(ip);
    BOGONS.iter().any(|&(net, len)| {
        let mask = u32::MAX << (32 - len as u32);
        x & mask == net
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub input_events: usize,
    pub removed_events: usize,
    pub kept_events: usize,
}

/// Drops events from reserved/non-routable sources or to port 0.
pub fn filter_invalid(corpus: &Corpus) -> (Corpus, FilterReport) {
    let mut report = FilterReport {
        input_events: corpus.event_count(),
        ..Default::default()
    };
    let logs: Vec<EntityLog> = corpus
        .entities()
        .values()
        .map(|log| {
            let kept: Vec<_> = log
                .events()
                .iter()
                .filter(|e| e.port != 0 && !is_bogon(e.source))
                .copied()
                .collect();
            report.removed_events += log.len() - kept.len();
            EntityLog::new(log.id().clone(), kept)
        })
        .collect();
    report.kept_events = report.input_events - report.removed_events;
    (corpus.rebuild(logs), report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LowContributorReport {
    /// Removed by the one-event-overall rule.
    pub single_event: Vec<EntityId>,
    /// Removed by the single-day, too-few-events rule.
    pub single_day: Vec<EntityId>,
    pub removed_events: usize,
}

/// Removes entities with one event overall, then entities active on a single
/// day with fewer than `min_single_day_events` events.
pub fn filter_low_contributors(
    corpus: &Corpus,
    min_single_day_events: usize,
) -> (Corpus, LowContributorReport) {
    let mut report = LowContributorReport::default();
    let origin = corpus.origin();
    let mut kept = Vec::new();
    for log in corpus.entities().values() {
        if log.len() == 1 {
            report.single_event.push(log.id().clone());
            report.removed_events += 1;
        } else if log.distinct_days(origin) == 1 && log.len() < min_single_day_events {
            report.single_day.push(log.id().clone());
            report.removed_events += log.len();
        } else {
            kept.push(log.clone());
        }
    }
    (corpus.rebuild(kept), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{parse_timestamp, LogEvent};

    fn log_with(id: &str, events: &[(&str, [u8; 4])]) -> EntityLog {
        EntityLog::new(
            id.into(),
            events
                .iter()
                .map(|(t, ip)| LogEvent {
                    timestamp: parse_timestamp(t).unwrap(),
                    source: Ipv4Addr::from(*ip),
                    port: 22,
                })
                .collect(),
        )
    }

    #[test]
    fn bogon_table() {
        assert!(is_bogon(Ipv4Addr::new(10, 0, 0, 1)));
        assert!(is_bogon(Ipv4Addr::new(172, 31, 255, 255)));
        assert!(!is_bogon(Ipv4Addr::new(172, 32, 0, 0)));
        assert!(is_bogon(Ipv4Addr::new(192, 168, 1, 1)));
        assert!(is_bogon(Ipv4Addr::new(127, 0, 0, 1)));
        assert!(is_bogon(Ipv4Addr::new(255, 255, 255, 255)));
        assert!(is_bogon(Ipv4Addr::new(224, 0, 0, 1)));
        assert!(!is_bogon(Ipv4Addr::new(8, 8, 8, 8)));
        assert!(!is_bogon(Ipv4Addr::new(211, 144, 119, 42)));
    }

    #[test]
    fn invalid_sources_removed() {
        let c = Corpus::from_logs([log_with(
            "a",
            &[
                ("2013-01-01 00:00:00", [10, 0, 0, 1]),
                ("2013-01-01 00:00:00", [8, 8, 8, 8]),
            ],
        )]);
        let (f, r) = filter_invalid(&c);
        assert_eq!(
            r,
            FilterReport {
                input_events: 2,
                removed_events: 1,
                kept_events: 1
            }
        );
        assert_eq!(
            f.entity(&"a".into()).unwrap().unique_sources().as_slice(),
            &[Ipv4Addr::new(8, 8, 8, 8)]
        );
    }

    #[test]
    fn only_bogons_gives_empty_corpus() {
        let c = Corpus::from_logs([
            log_with("a", &[("2013-01-01 00:00:00", [10, 0, 0, 1])]),
            log_with("b", &[("2013-01-01 00:00:00", [192, 168, 0, 1])]),
        ]);
        let (f, r) = filter_invalid(&c);
        assert!(f.is_empty());
        assert_eq!(r.removed_events, 2);
        assert_eq!(f.origin(), c.origin());
    }

    #[test]
    fn filters_are_idempotent() {
        let c = Corpus::from_logs([
            log_with(
                "a",
                &[
                    ("2013-01-01 00:00:00", [10, 0, 0, 1]),
                    ("2013-01-02 00:00:00", [8, 8, 8, 8]),
                ],
            ),
            log_with("b", &[("2013-01-01 00:00:00", [8, 8, 8, 8])]),
            log_with(
                "c",
                &[
                    ("2013-01-01 00:00:00", [1, 1, 1, 1]),
                    ("2013-01-03 00:00:00", [1, 1, 1, 1]),
                ],
            ),
        ]);
        let (once, _) = filter_invalid(&c);
        let (twice, r) = filter_invalid(&once);
        assert_eq!(once, twice);
        assert_eq!(r.removed_events, 0);
        let (l1, _) = filter_low_contributors(&once, DEFAULT_MIN_SINGLE_DAY_EVENTS);
        let (l2, r2) = filter_low_contributors(&l1, DEFAULT_MIN_SINGLE_DAY_EVENTS);
        assert_eq!(l1, l2);
        assert_eq!(r2.removed_events, 0);
        assert_eq!(
            l1.entity_ids().map(|e| e.as_str()).collect::<Vec<_>>(),
            vec!["c"]
        );
    }
}
