//! Seeded synthetic attack-log generator.
//!
//! Victims fall into three volume profiles (rarely, lightly, heavily
//! attacked). Attackers are stealth sources or heavy hitters and act in
//! bursts: an on/off Markov chain decides whether an attacker is active on a
//! day, and each burst fixes a target list. With probability
//! `correlation_rate` a burst's targets are drawn from one shared hit list,
//! so victims on the same list see the same sources on the same days.
//! Otherwise targets are drawn from the whole population, weighted by victim
//! volume. A fraction of each victim's events come from one-off noise sources.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{
    filter::is_bogon, parse_timestamp, Corpus, DataError, EntityId, EntityLog, LogEvent,
    SECONDS_PER_DAY,
};

const COMMON_PORTS: [(u16, f64); 12] = [
    (22, 20.0),
    (445, 16.0),
    (23, 12.0),
    (1433, 10.0),
    (3389, 9.0),
    (80, 8.0),
    (8080, 5.0),
    (3306, 4.0),
    (25, 3.0),
    (135, 3.0),
    (5900, 2.0),
    (21, 2.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VictimProfile {
    Rare,
    Light,
    Heavy,
}

/// Generator knobs. Every field has a default, so a config file may set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub victims: usize,
    pub attackers: usize,
    pub days: u32,
    /// First day, `YYYY-MM-DD`.
    pub start_date: String,
    /// Shares of rarely / lightly / heavily attacked victims; must sum to 1.
    pub profile_fractions: [f64; 3],
    /// Inclusive daily event-count range per profile, applied on active days.
    pub rare_daily: (u32, u32),
    pub light_daily: (u32, u32),
    pub heavy_daily: (u32, u32),
    /// Probability that a victim reports anything on a given day, per profile.
    pub report_prob: [f64; 3],
    /// Share of the attacker pool that is stealthy; the rest are heavy hitters.
    pub stealth_fraction: f64,
    pub stealth_targets: (u32, u32),
    pub heavy_targets: (u32, u32),
    /// Relative event weight of a heavy hitter against a stealth source.
    pub heavy_weight: f64,
    /// P(active tomorrow | active today).
    pub burst_continue: f64,
    /// P(active tomorrow | idle today).
    pub burst_start: f64,
    /// Probability that a burst targets a shared hit list.
    pub correlation_rate: f64,
    pub hit_list_size: usize,
    /// Share of a victim's events coming from one-off sources.
    pub noise_fraction: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            victims: 1000,
            attackers: 4000,
            days: 60,
            start_date: "2013-01-01".into(),
            profile_fractions: [0.87, 0.11, 0.02],
            rare_daily: (1, 9),
            light_daily: (10, 100),
            heavy_daily: (101, 300),
            report_prob: [0.3, 0.7, 0.95],
            stealth_fraction: 0.8,
            stealth_targets: (1, 4),
            heavy_targets: (10, 40),
            heavy_weight: 15.0,
            burst_continue: 0.7,
            burst_start: 0.06,
            correlation_rate: 0.5,
            hit_list_size: 30,
            noise_fraction: 0.15,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParams(m.to_owned()));
        let sum: f64 = self.profile_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9
            || self
                .profile_fractions
                .iter()
                .any(|&f| !(0.0..=1.0).contains(&f))
        {
            return bad("profile fractions must be in [0, 1] and sum to 1");
        }
        let probs = [
            self.stealth_fraction,
            self.burst_continue,
            self.burst_start,
            self.correlation_rate,
            self.noise_fraction,
        ];
        if probs
            .iter()
            .chain(self.report_prob.iter())
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("probabilities must lie in [0, 1]");
        }
        for (lo, hi) in [
            self.rare_daily,
            self.light_daily,
            self.heavy_daily,
            self.stealth_targets,
            self.heavy_targets,
        ] {
            if lo == 0 || lo > hi {
                return bad("ranges must satisfy 1 <= lo <= hi");
            }
        }
        if self.victims == 0 || self.days == 0 || self.hit_list_size == 0 {
            return bad("victims, days and hit_list_size must be positive");
        }
        if !(self.heavy_weight > 0.0) {
            return bad("heavy_weight must be positive");
        }
        if parse_timestamp(&format!("{} 00:00:00", self.start_date)).is_none() {
            return bad("start_date must be YYYY-MM-DD");
        }
        Ok(())
    }
}

/// Generated corpus plus the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub profiles: BTreeMap<EntityId, VictimProfile>,
    pub hit_lists: BTreeMap<EntityId, usize>,
}

struct Victim {
    id: EntityId,
    profile: VictimProfile,
    mean_daily: f64,
    range: (u32, u32),
    report_prob: f64,
}

struct Attacker {
    ip: Ipv4Addr,
    heavy: bool,
    port: u16,
    active: bool,
    targets: Vec<usize>,
}

fn random_routable(rng: &mut impl Rng, taken: &mut BTreeSet<Ipv4Addr>) -> Ipv4Addr {
    loop {
        let ip = Ipv4Addr::from(rng.gen::<u32>());
        if !is_bogon(ip) && taken.insert(ip) {
            return ip;
        }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    let (a, b) = ((lo as f64).ln(), (hi as f64 + 0.999).ln());
    rng.gen_range(a..=b).exp()
}

pub fn generate_synthetic(
    params: &SyntheticParams,
    seed: u64,
) -> Result<SyntheticCorpus, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = parse_timestamp(&format!("{} 00:00:00", params.start_date)).expect("validated");

    let profile_pick = WeightedIndex::new(params.profile_fractions)
        .map_err(|e| DataError::InvalidParams(e.to_string()))?;
    let mut names = BTreeSet::new();
    let victims: Vec<Victim> = (0..params.victims)
        .map(|_| {
            let id = loop {
                let name = format!("{:08x}", rng.gen::<u32>());
                if names.insert(name.clone()) {
                    break EntityId::new(name);
                }
            };
            let (profile, range, report_prob) = match profile_pick.sample(&mut rng) {
                0 => (
                    VictimProfile::Rare,
                    params.rare_daily,
                    params.report_prob[0],
                ),
                1 => (
                    VictimProfile::Light,
                    params.light_daily,
                    params.report_prob[1],
                ),
                _ => (
                    VictimProfile::Heavy,
                    params.heavy_daily,
                    params.report_prob[2],
                ),
            };
            Victim {
                id,
                profile,
                mean_daily: log_uniform(&mut rng, range.0, range.1),
                range,
                report_prob,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..victims.len()).collect();
    order.shuffle(&mut rng);
    let lists: Vec<Vec<usize>> = order
        .chunks(params.hit_list_size)
        .map(|c| c.to_vec())
        .collect();
    let mut hit_list_of = vec![0usize; victims.len()];
    for (g, members) in lists.iter().enumerate() {
        for &v in members {
            hit_list_of[v] = g;
        }
    }
    let attractiveness = WeightedIndex::new(
        victims
            .iter()
            .map(|v| v.mean_daily * v.report_prob.max(1e-3)),
    )
    .map_err(|e| DataError::InvalidParams(e.to_string()))?;

    let port_pick =
        WeightedIndex::new(COMMON_PORTS.iter().map(|&(_, w)| w)).expect("static weights");
    let pick_port = |rng: &mut ChaCha8Rng| -> u16 {
        if rng.gen_bool(0.1) {
            rng.gen_range(1024..=65535)
        } else {
            COMMON_PORTS[port_pick.sample(rng)].0
        }
    };

    let mut taken = BTreeSet::new();
    let stationary_on = if params.burst_start + (1.0 - params.burst_continue) > 0.0 {
        params.burst_start / (params.burst_start + 1.0 - params.burst_continue)
    } else {
        0.0
    };
    let mut attackers: Vec<Attacker> = (0..params.attackers)
        .map(|_| {
            let ip = random_routable(&mut rng, &mut taken);
            let heavy = !rng.gen_bool(params.stealth_fraction);
            let port = pick_port(&mut rng);
            Attacker {
                ip,
                heavy,
                port,
                active: rng.gen_bool(stationary_on),
                targets: Vec::new(),
            }
        })
        .collect();

    let choose_targets = |a: &mut Attacker, rng: &mut ChaCha8Rng| {
        let (lo, hi) = if a.heavy {
            params.heavy_targets
        } else {
            params.stealth_targets
        };
        let k = rng.gen_range(lo..=hi) as usize;
        a.targets.clear();
        if rng.gen_bool(params.correlation_rate) {
            let list = &lists[rng.gen_range(0..lists.len())];
            a.targets
                .extend(list.choose_multiple(rng, k.min(list.len())).copied());
        } else {
            let k = k.min(victims.len());
            let mut seen = BTreeSet::new();
            while seen.len() < k {
                seen.insert(attractiveness.sample(rng));
            }
            a.targets.extend(seen);
        }
    };
    for a in attackers.iter_mut() {
        if a.active {
            choose_targets(a, &mut rng);
        }
    }

    let jitter = Normal::new(0.0, 0.4).expect("valid normal");
    let mut events: Vec<Vec<LogEvent>> = vec![Vec::new(); victims.len()];
    let mut active_on: Vec<Vec<usize>> = vec![Vec::new(); victims.len()];
    for day in 0..params.days {
        if day > 0 {
            for a in attackers.iter_mut() {
                let was = a.active;
                a.active = if was {
                    rng.gen_bool(params.burst_continue)
                } else {
                    rng.gen_bool(params.burst_start)
                };
                if a.active && !was {
                    choose_targets(a, &mut rng);
                }
            }
        }
        for list in active_on.iter_mut() {
            list.clear();
        }
        for (ai, a) in attackers.iter().enumerate() {
            if a.active {
                for &v in &a.targets {
                    active_on[v].push(ai);
                }
            }
        }
        let day_start = origin + day as i64 * SECONDS_PER_DAY;
        for (vi, v) in victims.iter().enumerate() {
            if !rng.gen_bool(v.report_prob) {
                continue;
            }
            let z: f64 = jitter.sample(&mut rng);
            let n = (v.mean_daily * z.exp())
                .round()
                .clamp(v.range.0 as f64, v.range.1 as f64) as u32;
            let sources = &active_on[vi];
            let pick = if sources.is_empty() {
                None
            } else {
                WeightedIndex::new(sources.iter().map(|&ai| {
                    if attackers[ai].heavy {
                        params.heavy_weight
                    } else {
                        1.0
                    }
                }))
                .ok()
            };
            for _ in 0..n {
                let timestamp = day_start + rng.gen_range(0..SECONDS_PER_DAY);
                let event = match &pick {
                    Some(w) if !rng.gen_bool(params.noise_fraction) => {
                        let a = &attackers[sources[w.sample(&mut rng)]];
                        let port = if rng.gen_bool(0.8) {
                            a.port
                        } else {
                            pick_port(&mut rng)
                        };
                        LogEvent {
                            timestamp,
                            source: a.ip,
                            port,
                        }
                    }
                    _ => LogEvent {
                        timestamp,
                        source: random_routable(&mut rng, &mut taken),
                        port: pick_port(&mut rng),
                    },
                };
                events[vi].push(event);
            }
        }
    }

    let mut profiles = BTreeMap::new();
    let mut hit_lists = BTreeMap::new();
    let logs: Vec<EntityLog> = victims
        .iter()
        .zip(events)
        .enumerate()
        .map(|(vi, (v, ev))| {
            profiles.insert(v.id.clone(), v.profile);
            hit_lists.insert(v.id.clone(), hit_list_of[vi]);
            EntityLog::new(v.id.clone(), ev)
        })
        .collect();
    let mut corpus = Corpus::with_origin(logs, origin);
    corpus.days = corpus.days.max(params.days);
    profiles.retain(|id, _| corpus.entity(id).is_some());
    hit_lists.retain(|id, _| corpus.entity(id).is_some());
    Ok(SyntheticCorpus {
        corpus,
        profiles,
        hit_lists,
    })
}
