use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coshare_core::analyze::Granularity;
use coshare_core::crypto::GroupId;
use coshare_core::merge::MergeStrategy;
use coshare_core::netpeer::ProtocolId;
use coshare_core::predict::Signal;
use coshare_core::selection::{Metric, Mode, PolicyKind};

/// Private partner selection, log merging and blacklist prediction for
/// collaborating attack-log holders.
///
/// Settings resolve in order: built-in defaults, then the config file, then
/// flags. Every run prints the resolved configuration.
#[derive(Debug, Parser)]
#[command(name = "coshare", version)]
pub struct Cli {
    /// TOML config file
    #[arg(long, global = true, env = "COSHARE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads [default: one per core]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and filter a log file (or generate a synthetic one) and write the cleaned corpus
    Ingest(IngestArgs),
    /// Measurement suite: volumes, common/unique sources, entropy, inter-arrival times
    Analyze(AnalyzeArgs),
    /// Run the select/merge/predict experiment
    Simulate(SimulateArgs),
    /// Baseline true positives for a list of EWMA alpha values
    SweepAlpha(SweepArgs),
    /// Serve private protocol sessions for one entity's log
    PeerListen(ListenArgs),
    /// Run one private protocol against a listening peer
    PeerInitiate(InitiateArgs),
    /// Time PSI-CA and PSI-DT over in-process loopback
    Bench(BenchArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CorpusArgs {
    /// Input log CSV (contributor_id,source_ip,target_port,timestamp)
    #[arg(long, conflicts_with = "synthetic")]
    pub corpus: Option<PathBuf>,

    /// Generate the corpus from the [synthetic] config section instead of reading a file
    #[arg(long)]
    pub synthetic: bool,

    /// Seed for the synthetic generator and the experiment [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Skip the invalid-address and low-contributor filters
    #[arg(long)]
    pub no_filter: bool,

    /// Low-contributor filter: minimum events for a single-day entity [default: 20]
    #[arg(long)]
    pub min_single_day_events: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OutputArgs {
    /// Output directory [default: <runs-root>/<timestamp>-seed<seed>]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Parent directory for run directories [default: runs]
    #[arg(long)]
    pub runs_root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Also write inter-arrival gaps per key
    #[arg(long)]
    pub per_key: bool,

    /// Inter-arrival granularities [default: ip,slash24,slash8,all]
    #[arg(long, value_delimiter = ',')]
    pub granularity: Vec<Granularity>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ExperimentFlags {
    /// Benefit metric: intersection-size, jaccard, pearson, cosine [default: intersection-size]
    #[arg(long)]
    pub metric: Option<Metric>,

    /// Merge strategy: intersection, intersection-data, union-data [default: intersection-data]
    #[arg(long)]
    pub strategy: Option<MergeStrategy>,

    /// Pairs selected per day by the global top-pairs policy [default: 50]
    #[arg(long)]
    pub k_pairs: Option<usize>,

    /// Partnership policy: global-top-pairs, threshold, maximization, hybrid [default: global-top-pairs]
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<PolicyKind>,

    /// Benefit threshold for the threshold and hybrid policies
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Partners per entity for the maximization and hybrid policies
    #[arg(long)]
    pub k_partners: Option<usize>,

    /// Victims sampled per iteration [default: 100]
    #[arg(long)]
    pub sample_size: Option<usize>,

    /// Iterations [default: 100]
    #[arg(long)]
    pub iterations: Option<usize>,

    /// Training window in days [default: 7]
    #[arg(long)]
    pub train_days: Option<u32>,

    /// Test window in days [default: 1]
    #[arg(long)]
    pub test_days: Option<u32>,

    /// EWMA smoothing factor in (0, 1] [default: 0.9]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Prediction threshold on the EWMA score [default: 0]
    #[arg(long)]
    pub tau: Option<f64>,

    /// EWMA daily signal: binary or count [default: binary]
    #[arg(long, value_parser = parse_signal)]
    pub signal: Option<Signal>,

    /// Weight of acquired events in (0, 1] [default: 1]
    #[arg(long)]
    pub acquired_weight: Option<f64>,

    /// Keep only the best-scored sources per victim [default: no cap]
    #[arg(long)]
    pub max_blacklist: Option<usize>,

    /// Benefit and merge computation: plaintext or private [default: plaintext]
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,

    /// Agreed address universe size [default: corpus-wide distinct sources]
    #[arg(long)]
    pub universe_size: Option<u64>,

    /// Share only events at least this many days older than the training window end [default: off]
    #[arg(long)]
    pub min_shared_age_days: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Alpha values [default: 0.1,0.2,...,0.9]
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PeerFlags {
    /// Entity whose log is used [default: [peer] entity_id]
    #[arg(long)]
    pub entity: Option<String>,

    /// Group: ristretto255 or modp2048 [default: ristretto255]
    #[arg(long)]
    pub group: Option<GroupId>,
}

#[derive(Debug, Args)]
pub struct ListenArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub peer: PeerFlags,

    /// Listen address [default: 127.0.0.1:7400]
    #[arg(long)]
    pub addr: Option<SocketAddr>,

    /// Exit after this many sessions [default: serve forever]
    #[arg(long)]
    pub max_sessions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InitiateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub peer: PeerFlags,

    /// Peer address [default: 127.0.0.1:7400]
    #[arg(long)]
    pub addr: Option<SocketAddr>,

    /// Protocol: psi-ca, psi-dt or pjs
    #[arg(long)]
    pub proto: ProtocolId,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Set sizes [default: 100,200,400,800]
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,

    /// Runs per size, at least 10 [default: 10]
    #[arg(long)]
    pub runs: Option<usize>,

    /// Group: ristretto255 or modp2048 [default: ristretto255]
    #[arg(long)]
    pub group: Option<GroupId>,

    /// Also write the table as CSV to this file
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "global-top-pairs" => Ok(PolicyKind::GlobalTopPairs),
        "threshold" => Ok(PolicyKind::Threshold),
        "maximization" => Ok(PolicyKind::Maximization),
        "hybrid" => Ok(PolicyKind::Hybrid),
        _ => Err("expected global-top-pairs, threshold, maximization or hybrid".into()),
    }
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    match s {
        "binary" => Ok(Signal::Binary),
        "count" => Ok(Signal::Count),
        _ => Err("expected binary or count".into()),
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "plaintext" => Ok(Mode::Plaintext),
        "private" => Ok(Mode::Private),
        _ => Err("expected plaintext or private".into()),
    }
}
