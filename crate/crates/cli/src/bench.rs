use std::collections::BTreeMap;
use std::io::Write;
use std::net::Ipv4Addr;
use std::thread;
use std::time::{Duration, Instant};

use coshare_core::crypto::{
    run_psi_ca, run_psi_dt, AssociatedPayload, GroupId, ProtocolConfig, Role,
};
use coshare_core::datamodel::IpSet;
use coshare_core::netpeer::MemoryChannel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

pub const MIN_RUNS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub protocol: &'static str,
    pub size: usize,
    pub runs: usize,
    pub median: Duration,
}

/// Two sets of `n` addresses sharing half their elements.
fn sets(n: usize, rng: &mut ChaCha8Rng) -> (IpSet, IpSet) {
    let mut a = IpSet::new();
    while a.len() < n {
        a.insert(Ipv4Addr::from(rng.gen::<u32>()));
    }
    let mut b: IpSet = a.iter().take(n / 2).collect();
    while b.len() < n {
        b.insert(Ipv4Addr::from(rng.gen::<u32>()));
    }
    (a, b)
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

fn time_ca(group: GroupId, a: &IpSet, b: &IpSet) -> Result<Duration, CliError> {
    let (mut x, mut y) = MemoryChannel::pair();
    let start = Instant::now();
    thread::scope(|s| {
        let srv = s.spawn(move || {
            run_psi_ca(
                &ProtocolConfig::new("server").with_group(group),
                b,
                &mut y,
                Role::Server,
            )
        });
        let cli = run_psi_ca(
            &ProtocolConfig::new("client").with_group(group),
            a,
            &mut x,
            Role::Client,
        );
        let srv = srv
            .join()
            .map_err(|_| CliError::Internal("server thread panicked".into()))?;
        cli.and(srv).map_err(|e| CliError::Protocol(e.to_string()))
    })?;
    Ok(start.elapsed())
}

fn time_dt(
    group: GroupId,
    a: &IpSet,
    b: &IpSet,
    payloads: &BTreeMap<Ipv4Addr, AssociatedPayload>,
) -> Result<Duration, CliError> {
    let (mut x, mut y) = MemoryChannel::pair();
    let start = Instant::now();
    thread::scope(|s| {
        let srv = s.spawn(move || {
            run_psi_dt(
                &ProtocolConfig::new("server").with_group(group),
                b,
                payloads,
                &mut y,
                Role::Server,
            )
        });
        let cli = run_psi_dt(
            &ProtocolConfig::new("client").with_group(group),
            a,
            &BTreeMap::new(),
            &mut x,
            Role::Client,
        );
        let srv = srv
            .join()
            .map_err(|_| CliError::Internal("server thread panicked".into()))?;
        cli.and(srv).map_err(|e| CliError::Protocol(e.to_string()))
    })?;
    Ok(start.elapsed())
}

/// Median wall-clock time of both protocols at each size.
pub fn run(sizes: &[usize], runs: usize, group: GroupId) -> Result<Vec<BenchRow>, CliError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Usage("set sizes must be at least 1".into()));
    }
    if runs < MIN_RUNS {
        return Err(CliError::Usage(format!(
            "at least {MIN_RUNS} runs per size are required"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::new();
    for &n in sizes {
        let (a, b) = sets(n, &mut rng);
        let payloads = b
            .iter()
            .map(|ip| {
                (
                    ip,
                    AssociatedPayload {
                        item: ip,
                        events: vec![(1_356_998_400, 22)],
                    },
                )
            })
            .collect();
        let ca = (0..runs)
            .map(|_| time_ca(group, &a, &b))
            .collect::<Result<Vec<_>, _>>()?;
        let dt = (0..runs)
            .map(|_| time_dt(group, &a, &b, &payloads))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(BenchRow {
            protocol: "psi-ca",
            size: n,
            runs,
            median: median(ca),
        });
        rows.push(BenchRow {
            protocol: "psi-dt",
            size: n,
            runs,
            median: median(dt),
        });
    }
    Ok(rows)
}

pub fn print_table(rows: &[BenchRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<8} {:>6} {:>6} {:>12}",
        "protocol", "size", "runs", "median_ms"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<8} {:>6} {:>6} {:>12.3}",
            r.protocol,
            r.size,
            r.runs,
            r.median.as_secs_f64() * 1e3
        )?;
    }
    Ok(())
}

pub fn write_csv(rows: &[BenchRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "protocol,size,runs,median_ms")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.protocol,
            r.size,
            r.runs,
            r.median.as_secs_f64() * 1e3
        )?;
    }
    Ok(())
}
