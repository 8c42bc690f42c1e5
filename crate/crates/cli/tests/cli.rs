use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn coshare() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coshare"));
    c.env_remove("COSHARE_CONFIG").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    coshare().args(args).output().expect("spawn coshare")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two entities, three days, with four shared sources.
fn write_corpus(path: &Path) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "contributor_id,source_ip,target_port,timestamp").unwrap();
    for day in 1..=3 {
        for k in 0..6 {
            writeln!(f, "alpha,11.0.0.{k},22,2013-01-0{day} 0{k}:00:00").unwrap();
        }
        for k in 2..9 {
            writeln!(f, "beta,11.0.0.{k},80,2013-01-0{day} 1{k}:00:00").unwrap();
        }
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn bad_flag_is_usage_error() {
    let o = run(&["simulate", "--synthetic", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn bad_flag_value_is_usage_error() {
    let o = run(&["simulate", "--synthetic", "--metric", "euclid"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn missing_corpus_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "simulate",
        "--corpus",
        tmp.path().join("absent.csv").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(66));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[no-input]"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[experiment]\nsamples = 3\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "simulate", "--synthetic"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn simulate_writes_outputs_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&[
        "simulate",
        "--synthetic",
        "--seed",
        "3",
        "--sample-size",
        "20",
        "--iterations",
        "2",
        "--k-pairs",
        "5",
        "--alpha",
        "0.7",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("alpha = 0.7"));
    assert!(text.contains("seed = 3"));
    for f in ["report.json", "daily.csv", "outcomes.csv", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let saved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("sample_size = 20"));

    // the saved config reproduces the run
    let again = tmp.path().join("again");
    let o = run(&[
        "--config",
        out.join("config.toml").to_str().unwrap(),
        "simulate",
        "--synthetic",
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(again.join("report.json")).unwrap()
    );
}

#[test]
fn runs_root_gets_timestamped_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("runs");
    for _ in 0..2 {
        let o = run(&[
            "ingest",
            "--synthetic",
            "--seed",
            "4",
            "--runs-root",
            root.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let dirs: Vec<String> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(dirs.len(), 2);
    assert!(dirs.iter().all(|d| d.contains("-seed4")));
}

#[test]
fn ingest_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("log.csv");
    write_corpus(&csv);
    let ing = tmp.path().join("ing");
    let o = run(&[
        "ingest",
        "--corpus",
        csv.to_str().unwrap(),
        "--no-filter",
        "--out-dir",
        ing.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ing.join("ingest.json")).unwrap()).unwrap();
    assert_eq!(report["entities"], 2);
    assert_eq!(report["events"], 39);

    let an = tmp.path().join("an");
    let o = run(&[
        "analyze",
        "--corpus",
        ing.join("corpus.csv").to_str().unwrap(),
        "--no-filter",
        "--granularity",
        "slash24",
        "--per-key",
        "--out-dir",
        an.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "volumes.csv",
        "common_unique.csv",
        "entropy_port.csv",
        "interarrival_slash24.csv",
        "interarrival_slash24_per_key.csv",
        "summary.json",
    ] {
        assert!(an.join(f).is_file(), "missing {f}");
    }
    assert!(!an.join("interarrival_ip.csv").exists());
    let volumes = std::fs::read_to_string(an.join("volumes.csv")).unwrap();
    assert_eq!(volumes.lines().count(), 4);
}

#[test]
fn sweep_alpha_reports_each_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let o = run(&[
        "sweep-alpha",
        "--synthetic",
        "--sample-size",
        "10",
        "--iterations",
        "1",
        "--alphas",
        "0.3,0.9",
        "--max-blacklist",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(stdout(&o).contains("argmax"));
}

#[test]
fn sweep_rejects_alpha_out_of_range() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep-alpha",
        "--synthetic",
        "--alphas",
        "0.5,1.5",
        "--out-dir",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn bench_prints_table_and_enforces_min_runs() {
    let o = run(&["bench", "--sizes", "8", "--runs", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("psi-ca") && text.contains("psi-dt"));
    assert_eq!(
        run(&["bench", "--sizes", "8", "--runs", "3"]).status.code(),
        Some(64)
    );
}

#[test]
fn peer_sessions_over_loopback() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("log.csv");
    write_corpus(&csv);
    let csv = csv.to_str().unwrap();
    let mut server = coshare()
        .args([
            "peer-listen",
            "--corpus",
            csv,
            "--no-filter",
            "--entity",
            "beta",
            "--addr",
            "127.0.0.1:0",
            "--max-sessions",
            "3",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(server.stdout.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("listener output").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    let initiate = |proto: &str| {
        let o = run(&[
            "peer-initiate",
            "--corpus",
            csv,
            "--no-filter",
            "--entity",
            "alpha",
            "--addr",
            &addr,
            "--proto",
            proto,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    assert!(initiate("psi-ca").contains("cardinality 4"));
    assert!(initiate("pjs").contains("jaccard 0.4444444444444444"));
    let dt = initiate("psi-dt");
    assert!(dt.contains("intersection 4"));
    assert!(dt.contains("11.0.0.2,2013-01-01 12:00:00,80"));
    assert_eq!(dt.lines().filter(|l| l.starts_with("11.0.0.")).count(), 12);

    assert!(server.wait().unwrap().success());
    let served: Vec<String> = lines
        .map(|l| l.unwrap())
        .filter(|l| l.starts_with("session"))
        .collect();
    assert_eq!(served.len(), 3, "{served:?}");
}

#[test]
fn unreachable_peer_is_protocol_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("log.csv");
    write_corpus(&csv);
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let o = run(&[
        "peer-initiate",
        "--corpus",
        csv.to_str().unwrap(),
        "--no-filter",
        "--entity",
        "alpha",
        "--addr",
        &format!("127.0.0.1:{port}"),
        "--proto",
        "psi-ca",
    ]);
    assert_eq!(o.status.code(), Some(69));
}

#[test]
fn unknown_entity_is_no_input() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("log.csv");
    write_corpus(&csv);
    let o = run(&[
        "peer-initiate",
        "--corpus",
        csv.to_str().unwrap(),
        "--no-filter",
        "--entity",
        "gamma",
        "--proto",
        "psi-ca",
    ]);
    assert_eq!(o.status.code(), Some(66));
}
