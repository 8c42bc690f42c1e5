use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use coshare_core::analyze::{self, Field, Granularity};
use coshare_core::crypto::CryptoParams;
use coshare_core::datamodel::{
    self, filter_invalid, filter_low_contributors, generate_synthetic, ingest_csv, Corpus,
    EntityId, FilterReport, IngestReport,
};
use coshare_core::experiment::{alpha_sweep, run_experiment};
use coshare_core::netpeer::{
    initiate, listen, ListenPolicy, PeerDataset, PeerError, ProtocolResult, SessionSummary,
};
use coshare_core::predict::write_outcomes_csv;
use serde::Serialize;

use crate::args::{
    AnalyzeArgs, BenchArgs, CorpusArgs, IngestArgs, InitiateArgs, ListenArgs, OutputArgs,
    PeerFlags, SimulateArgs, SweepArgs,
};
use crate::bench;
use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct LoadReport {
    source: String,
    ingest: Option<IngestReport>,
    invalid: Option<FilterReport>,
    removed_single_event: usize,
    removed_single_day: usize,
    removed_low_contributor_events: usize,
    entities: usize,
    events: usize,
    days: u32,
    universe: usize,
}

fn load_corpus(cfg: &FileConfig, a: &CorpusArgs) -> Result<(Corpus, LoadReport), CliError> {
    let (corpus, source, ingest) = if a.synthetic {
        let s = generate_synthetic(&cfg.synthetic, cfg.experiment.seed)?;
        (
            s.corpus,
            format!("synthetic(seed={})", cfg.experiment.seed),
            None,
        )
    } else {
        let path = a
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Usage("either --corpus or --synthetic is required".into()))?;
        if !path.is_file() {
            return Err(CliError::NoInput(format!(
                "corpus {} does not exist or is not a file",
                path.display()
            )));
        }
        let (c, r) = ingest_csv(path)?;
        (c, path.display().to_string(), Some(r))
    };
    let mut report = LoadReport {
        source,
        ingest,
        invalid: None,
        removed_single_event: 0,
        removed_single_day: 0,
        removed_low_contributor_events: 0,
        entities: 0,
        events: 0,
        days: 0,
        universe: 0,
    };
    let corpus = if cfg.filter.enabled {
        let (c, inv) = filter_invalid(&corpus);
        let (c, low) = filter_low_contributors(&c, cfg.filter.min_single_day_events);
        report.invalid = Some(inv);
        report.removed_single_event = low.single_event.len();
        report.removed_single_day = low.single_day.len();
        report.removed_low_contributor_events = low.removed_events;
        c
    } else {
        corpus
    };
    report.entities = corpus.len();
    report.events = corpus.event_count();
    report.days = corpus.days();
    report.universe = corpus.universe().len();
    log::info!(
        "corpus: {} entities, {} events over {} days",
        report.entities,
        report.events,
        report.days
    );
    Ok((corpus, report))
}

fn print_config(cfg: &FileConfig) {
    println!("# effective configuration");
    print!("{}", cfg.to_toml());
    println!("# end configuration");
}

/// The explicit output directory, or a fresh `<root>/<timestamp>-seed<seed>`.
fn run_dir(cfg: &FileConfig, out: &OutputArgs) -> Result<PathBuf, CliError> {
    let dir = match &out.out_dir {
        Some(d) => d.clone(),
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            let base = cfg
                .output
                .runs_root
                .join(format!("{stamp}-seed{}", cfg.experiment.seed));
            let mut dir = base.clone();
            let mut n = 1;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{n}", base.display()));
                n += 1;
            }
            dir
        }
    };
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::CantCreate(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), String>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::CantCreate(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    w.flush()
        .map_err(|e| CliError::CantCreate(format!("{}: {e}", path.display())))
}

fn json(w: &mut impl Write, value: &impl Serialize) -> Result<(), String> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| e.to_string())?;
    w.write_all(b"\n").map_err(|e| e.to_string())
}

fn finish(cfg: &FileConfig, dir: &Path) -> Result<(), CliError> {
    write_file(dir, "config.toml", |w| {
        w.write_all(cfg.to_toml().as_bytes())
            .map_err(|e| e.to_string())
    })?;
    println!("outputs: {}", dir.display());
    Ok(())
}

pub fn ingest(mut cfg: FileConfig, a: &IngestArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    cfg.apply_output(&a.output);
    print_config(&cfg);
    let (corpus, report) = load_corpus(&cfg, &a.corpus)?;
    let dir = run_dir(&cfg, &a.output)?;
    write_file(&dir, "corpus.csv", |w| {
        datamodel::write_csv(&corpus, w).map_err(|e| e.to_string())
    })?;
    write_file(&dir, "ingest.json", |w| json(w, &report))?;
    println!(
        "{} entities, {} events kept",
        report.entities, report.events
    );
    finish(&cfg, &dir)
}

pub fn analyze(mut cfg: FileConfig, a: &AnalyzeArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    cfg.apply_output(&a.output);
    print_config(&cfg);
    let (corpus, report) = load_corpus(&cfg, &a.corpus)?;
    if corpus.is_empty() {
        return Err(CliError::Data("corpus is empty after filtering".into()));
    }
    let dir = run_dir(&cfg, &a.output)?;
    let volumes = analyze::daily_volumes(&corpus);
    write_file(&dir, "volumes.csv", |w| {
        analyze::write_volumes_csv(&volumes, w).map_err(|e| e.to_string())
    })?;

    let cu = analyze::common_unique_cdf(&corpus);
    write_file(&dir, "common_unique.csv", |w| {
        analyze::write_common_unique_csv(&cu, w).map_err(|e| e.to_string())
    })?;
    let mut summary = serde_json::Map::new();
    for d in [
        &cu.victim_common,
        &cu.victim_unique,
        &cu.source_common,
        &cu.source_unique,
    ] {
        write_file(&dir, &format!("cdf_{}.csv", d.name), |w| {
            d.write_cdf_csv(w).map_err(|e| e.to_string())
        })?;
        summary.insert(
            d.name.clone(),
            serde_json::json!({"count": d.samples.len(), "mean": d.mean, "median": d.median}),
        );
    }
    for field in [Field::Port, Field::Victim, Field::Source] {
        let e = analyze::field_entropy(&corpus, field);
        write_file(&dir, &format!("entropy_{field}.csv"), |w| {
            analyze::write_entropy_csv(&e, w).map_err(|e| e.to_string())
        })?;
        summary.insert(e.distribution.name.clone(), serde_json::json!({"days": e.per_day.len(), "mean": e.distribution.mean, "median": e.distribution.median}));
    }
    let grans = if a.granularity.is_empty() {
        Granularity::ALL.to_vec()
    } else {
        a.granularity.clone()
    };
    for g in grans {
        let r = analyze::interarrival(&corpus, g, a.per_key);
        write_file(&dir, &format!("interarrival_{}.csv", g.name()), |w| {
            analyze::write_interarrival_csv(&r, w).map_err(|e| e.to_string())
        })?;
        if let Some(per_key) = &r.per_key {
            write_file(
                &dir,
                &format!("interarrival_{}_per_key.csv", g.name()),
                |w| {
                    writeln!(w, "key,gap_seconds").map_err(|e| e.to_string())?;
                    for (k, gaps) in per_key {
                        for g in gaps {
                            writeln!(w, "{k},{g}").map_err(|e| e.to_string())?;
                        }
                    }
                    Ok(())
                },
            )?;
        }
        summary.insert(r.gaps.name.clone(), serde_json::json!({"count": r.gaps.samples.len(), "mean_seconds": r.gaps.mean, "median_seconds": r.gaps.median}));
    }
    let total: usize = volumes.iter().map(|v| v.attacks).sum();
    summary.insert(
        "corpus".into(),
        serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?,
    );
    summary.insert("total_attacks".into(), total.into());
    write_file(&dir, "summary.json", |w| json(w, &summary))?;
    finish(&cfg, &dir)
}

pub fn simulate(mut cfg: FileConfig, a: &SimulateArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    cfg.apply_output(&a.output);
    cfg.apply_experiment(&a.experiment)?;
    print_config(&cfg);
    let (corpus, _) = load_corpus(&cfg, &a.corpus)?;
    cfg.experiment
        .validate(&corpus)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report =
        run_experiment(&corpus, &cfg.experiment).map_err(|e| CliError::Internal(e.to_string()))?;
    let dir = run_dir(&cfg, &a.output)?;
    write_file(&dir, "report.json", |w| json(w, &report))?;
    write_file(&dir, "daily.csv", |w| {
        report.write_daily_csv(w).map_err(|e| e.to_string())
    })?;
    write_file(&dir, "outcomes.csv", |w| {
        write_outcomes_csv(&report.first_outcomes, w).map_err(|e| e.to_string())
    })?;
    let t = &report.totals;
    println!(
        "tp {:.2} tp_collab {:.2} lub {:.2} gub {:.2}",
        t.tp_total, t.tpc_total, t.lub, t.gub
    );
    if let Some(m) = report.improvement.mean {
        println!(
            "mean improvement {m:.4} over {} collaborators ({} undefined)",
            report.improvement.count, report.undefined_improvements
        );
    }
    finish(&cfg, &dir)
}

pub fn sweep_alpha(mut cfg: FileConfig, a: &SweepArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    cfg.apply_output(&a.output);
    cfg.apply_experiment(&a.experiment)?;
    let alphas: Vec<f64> = if a.alphas.is_empty() {
        (1..=9).map(|k| k as f64 / 10.0).collect()
    } else {
        a.alphas.clone()
    };
    print_config(&cfg);
    println!("alphas = {alphas:?}");
    let (corpus, _) = load_corpus(&cfg, &a.corpus)?;
    cfg.experiment
        .validate(&corpus)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let sweep = alpha_sweep(&corpus, &cfg.experiment, &alphas).map_err(|e| match e {
        coshare_core::experiment::ExperimentError::Predict(p) => CliError::Usage(p.to_string()),
        other => CliError::Internal(other.to_string()),
    })?;
    let dir = run_dir(&cfg, &a.output)?;
    write_file(&dir, "sweep.json", |w| json(w, &sweep))?;
    write_file(&dir, "sweep.csv", |w| {
        writeln!(w, "alpha,tp").map_err(|e| e.to_string())?;
        for (al, tp) in &sweep.points {
            writeln!(w, "{al},{tp}").map_err(|e| e.to_string())?;
        }
        Ok(())
    })?;
    for (al, tp) in &sweep.points {
        println!("alpha {al:.2} tp {tp:.2}");
    }
    println!("argmax {}", sweep.argmax);
    finish(&cfg, &dir)
}

fn peer_dataset(
    cfg: &FileConfig,
    corpus_args: &CorpusArgs,
    peer: &PeerFlags,
) -> Result<PeerDataset, CliError> {
    let (corpus, _) = load_corpus(cfg, corpus_args)?;
    let id = peer
        .entity
        .clone()
        .or_else(|| cfg.peer.entity_id.clone())
        .ok_or_else(|| CliError::Usage("--entity (or [peer] entity_id) is required".into()))?;
    let log = corpus
        .entity(&EntityId::new(&id))
        .ok_or_else(|| CliError::NoInput(format!("entity {id:?} not found in corpus")))?;
    Ok(PeerDataset::from_log(log))
}

fn apply_peer(cfg: &mut FileConfig, peer: &PeerFlags, addr: Option<std::net::SocketAddr>) {
    if let Some(g) = peer.group {
        cfg.peer.group = g;
    }
    if let Some(e) = &peer.entity {
        cfg.peer.entity_id = Some(e.clone());
    }
    if let Some(a) = addr {
        cfg.peer.addr = a.to_string();
    }
}

pub fn peer_listen(mut cfg: FileConfig, a: &ListenArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    apply_peer(&mut cfg, &a.peer, a.addr);
    print_config(&cfg);
    let data = peer_dataset(&cfg, &a.corpus, &a.peer)?;
    let policy = ListenPolicy {
        params: CryptoParams {
            group: cfg.peer.group,
            ..Default::default()
        },
        ..Default::default()
    };
    let handle = listen(cfg.peer.addr.as_str(), data, policy)
        .map_err(|e| CliError::Protocol(format!("cannot bind {}: {e}", cfg.peer.addr)))?;
    println!("listening on {}", handle.local_addr());
    io::stdout().flush().ok();
    let mut seen = 0;
    loop {
        let records = handle.records();
        for r in &records[seen..] {
            match &r.result {
                Ok(s) => println!(
                    "session {} {:?}: {}",
                    r.client_entity.as_deref().unwrap_or("?"),
                    r.protocol,
                    describe_summary(s)
                ),
                Err(e) => println!("session aborted: {e}"),
            }
        }
        io::stdout().flush().ok();
        seen = records.len();
        if a.max_sessions.is_some_and(|m| seen >= m) {
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    handle.shutdown();
    Ok(())
}

fn describe_summary(s: &SessionSummary) -> String {
    match s {
        SessionSummary::Cardinality(Some(c)) => format!("cardinality {c}"),
        SessionSummary::Cardinality(None) => "cardinality not reported".into(),
        SessionSummary::DataTransfer { peer_set_size } => {
            format!("data transfer to a set of {peer_set_size}")
        }
        SessionSummary::Jaccard(Some(j)) => format!("jaccard {j}"),
        SessionSummary::Jaccard(None) => "jaccard not reported".into(),
    }
}

pub fn peer_initiate(mut cfg: FileConfig, a: &InitiateArgs) -> Result<(), CliError> {
    cfg.apply_corpus(&a.corpus);
    apply_peer(&mut cfg, &a.peer, a.addr);
    print_config(&cfg);
    let data = peer_dataset(&cfg, &a.corpus, &a.peer)?;
    let params = CryptoParams {
        group: cfg.peer.group,
        ..Default::default()
    };
    let result = initiate(cfg.peer.addr.as_str(), a.proto, &data, params).map_err(|e| match e {
        PeerError::Connect(_) | PeerError::Handshake(_) | PeerError::Protocol(_) => {
            CliError::Protocol(e.to_string())
        }
    })?;
    match result {
        ProtocolResult::Cardinality(c) => println!("cardinality {c}"),
        ProtocolResult::Jaccard(j) => println!("jaccard {j}"),
        ProtocolResult::Intersection(items) => {
            println!("intersection {}", items.len());
            for (ip, p) in items {
                for (ts, port) in p.events {
                    println!("{ip},{},{port}", datamodel::format_timestamp(ts));
                }
            }
        }
    }
    Ok(())
}

pub fn bench(cfg: FileConfig, a: &BenchArgs) -> Result<(), CliError> {
    let sizes = if a.sizes.is_empty() {
        vec![100, 200, 400, 800]
    } else {
        a.sizes.clone()
    };
    let runs = a.runs.unwrap_or(bench::MIN_RUNS);
    let group = a.group.unwrap_or(cfg.peer.group);
    println!("# effective configuration\nsizes = {sizes:?}\nruns = {runs}\ngroup = \"{group}\"\n# end configuration");
    let rows = bench::run(&sizes, runs, group)?;
    bench::print_table(&rows, io::stdout()).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(path) = &a.csv {
        let f = File::create(path)
            .map_err(|e| CliError::CantCreate(format!("{}: {e}", path.display())))?;
        bench::write_csv(&rows, f).map_err(|e| CliError::CantCreate(e.to_string()))?;
    }
    Ok(())
}
