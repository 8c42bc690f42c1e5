use std::path::{Path, PathBuf};

use coshare_core::crypto::GroupId;
use coshare_core::datamodel::{SyntheticParams, DEFAULT_MIN_SINGLE_DAY_EVENTS};
use coshare_core::experiment::ExperimentConfig;
use coshare_core::selection::{PartnershipPolicy, PolicyKind};
use serde::{Deserialize, Serialize};

use crate::args::{CorpusArgs, ExperimentFlags, OutputArgs};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub enabled: bool,
    pub min_single_day_events: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            enabled: true,
            min_single_day_events: DEFAULT_MIN_SINGLE_DAY_EVENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeerSection {
    pub entity_id: Option<String>,
    pub addr: String,
    pub group: GroupId,
}

impl Default for PeerSection {
    fn default() -> Self {
        PeerSection {
            entity_id: None,
            addr: "127.0.0.1:7400".into(),
            group: GroupId::Ristretto255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub runs_root: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            runs_root: "runs".into(),
        }
    }
}

/// Everything a config file may set. Sections and keys are all optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentConfig,
    pub synthetic: SyntheticParams,
    pub filter: FilterSection,
    pub peer: PeerSection,
    pub output: OutputSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::NoInput(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn apply_corpus(&mut self, a: &CorpusArgs) {
        if let Some(s) = a.seed {
            self.experiment.seed = s;
        }
        if a.no_filter {
            self.filter.enabled = false;
        }
        if let Some(m) = a.min_single_day_events {
            self.filter.min_single_day_events = m;
        }
    }

    pub fn apply_output(&mut self, a: &OutputArgs) {
        if let Some(r) = &a.runs_root {
            self.output.runs_root = r.clone();
        }
    }

    pub fn apply_experiment(&mut self, f: &ExperimentFlags) -> Result<(), CliError> {
        let e = &mut self.experiment;
        macro_rules! set {
            ($flag:expr => $dst:expr) => {
                if let Some(v) = $flag {
                    $dst = v;
                }
            };
        }
        set!(f.metric => e.metric);
        set!(f.strategy => e.strategy);
        set!(f.k_pairs => e.pair_budget);
        set!(f.sample_size => e.sample_size);
        set!(f.iterations => e.iterations);
        set!(f.train_days => e.train_days);
        set!(f.test_days => e.test_days);
        set!(f.alpha => e.ewma.alpha);
        set!(f.tau => e.ewma.threshold_tau);
        set!(f.signal => e.ewma.signal);
        set!(f.acquired_weight => e.ewma.acquired_weight);
        set!(f.mode => e.mode);
        if f.max_blacklist.is_some() {
            e.ewma.max_blacklist = f.max_blacklist;
        }
        if f.universe_size.is_some() {
            e.universe_size = f.universe_size;
        }
        if f.min_shared_age_days.is_some() {
            e.min_shared_age_days = f.min_shared_age_days;
        }
        if f.policy.is_some() || f.threshold.is_some() || f.k_partners.is_some() {
            let base = e
                .policy
                .unwrap_or(PartnershipPolicy::global_top_pairs(e.pair_budget));
            let kind = f.policy.unwrap_or(base.kind);
            let p = PartnershipPolicy {
                kind,
                threshold: f.threshold.or(base.threshold),
                k: f.k_partners.or(base.k),
                pair_budget: Some(e.pair_budget),
            };
            p.validate()
                .map_err(|err| CliError::Usage(err.to_string()))?;
            e.policy = (kind != PolicyKind::GlobalTopPairs).then_some(p);
        }
        e.ewma
            .validate()
            .map_err(|err| CliError::Usage(err.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self)
            .unwrap_or_else(|e| format!("# cannot render configuration: {e}\n"))
    }
}
