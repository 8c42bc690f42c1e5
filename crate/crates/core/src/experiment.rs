//! Experiment driver: victim sampling, the daily select/merge/predict loop,
//! alpha sweeps and the aggregate report.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Corpus, DayIndex, EntityId, IpSet};
use crate::merge::{merge_coalitions, MergeOptions, MergeStrategy};
use crate::predict::{
    count_tp, ewma_scores, improvement, predict_blacklist, training_attackers, upper_bounds_with,
    EwmaParams, PredictError, PredictionOutcome, TimeWindows,
};
use crate::selection::{
    establish_partnerships, BenefitMatrix, CoalitionSet, Metric, Mode, PartnershipPolicy,
    SelectionError,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("corpus spans {days} days, too short for {needed} (training + test)")]
    SpanTooShort { days: u32, needed: u32 },
    #[error("sample of {sample} victims requested from a corpus of {available}")]
    SampleTooLarge { sample: usize, available: usize },
    #[error("invalid experiment configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sample_size: usize,
    pub iterations: usize,
    /// Number of globally best pairs selected each day.
    pub pair_budget: usize,
    /// Replaces the global top-pairs policy when set.
    pub policy: Option<PartnershipPolicy>,
    pub metric: Metric,
    pub strategy: MergeStrategy,
    pub mode: Mode,
    pub train_days: u32,
    pub test_days: u32,
    /// First and last anchor day; default is every day with a full window.
    pub first_anchor: Option<u32>,
    pub last_anchor: Option<u32>,
    pub ewma: EwmaParams,
    /// Agreed universe size; default is the corpus-wide source count.
    pub universe_size: Option<u64>,
    pub min_shared_age_days: Option<u32>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sample_size: 100,
            iterations: 100,
            pair_budget: 50,
            policy: None,
            metric: Metric::IntersectionSize,
            strategy: MergeStrategy::IntersectionWithData,
            mode: Mode::Plaintext,
            train_days: 7,
            test_days: 1,
            first_anchor: None,
            last_anchor: None,
            ewma: EwmaParams::default(),
            universe_size: None,
            min_shared_age_days: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn policy(&self) -> PartnershipPolicy {
        self.policy
            .unwrap_or(PartnershipPolicy::global_top_pairs(self.pair_budget))
    }

    /// Anchor days evaluated on `corpus`.
    pub fn anchors(&self, corpus: &Corpus) -> Result<Vec<u32>, ExperimentError> {
        let needed = self.train_days + self.test_days;
        if self.train_days == 0 || self.test_days == 0 {
            return Err(ExperimentError::Invalid(
                "train_days and test_days must be at least 1".into(),
            ));
        }
        if corpus.days() < needed {
            return Err(ExperimentError::SpanTooShort {
                days: corpus.days(),
                needed,
            });
        }
        let lo = self
            .first_anchor
            .unwrap_or(self.train_days + 1)
            .max(self.train_days + 1);
        let hi = self
            .last_anchor
            .unwrap_or(u32::MAX)
            .min(corpus.days() + 1 - self.test_days);
        if lo > hi {
            return Err(ExperimentError::Invalid(format!(
                "empty anchor range {lo}..={hi}"
            )));
        }
        Ok((lo..=hi).collect())
    }

    pub fn validate(&self, corpus: &Corpus) -> Result<(), ExperimentError> {
        self.ewma.validate()?;
        self.policy().validate()?;
        if self.sample_size < 2 {
            return Err(ExperimentError::Invalid(
                "sample_size must be at least 2".into(),
            ));
        }
        if self.sample_size > corpus.len() {
            return Err(ExperimentError::SampleTooLarge {
                sample: self.sample_size,
                available: corpus.len(),
            });
        }
        self.anchors(corpus).map(|_| ())
    }
}

/// Victims drawn for iteration `index`, in id order.
pub fn sample_victims(
    corpus: &Corpus,
    sample_size: usize,
    seed: u64,
    index: usize,
) -> Vec<EntityId> {
    let ids: Vec<&EntityId> = corpus.entity_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let mut picked =
        rand::seq::index::sample(&mut rng, ids.len(), sample_size.min(ids.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| ids[i].clone()).collect()
}

/// Sums over the sampled victims for one anchor day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DayRecord {
    pub day: u32,
    pub tp_collaborators: f64,
    pub tpc_collaborators: f64,
    pub tp_non_collaborators: f64,
    pub tp_total: f64,
    pub tpc_total: f64,
    pub lub: f64,
    pub gub: f64,
    pub collaborators: f64,
    pub pairs: f64,
}

impl DayRecord {
    fn add(&mut self, o: &DayRecord) {
        self.tp_collaborators += o.tp_collaborators;
        self.tpc_collaborators += o.tpc_collaborators;
        self.tp_non_collaborators += o.tp_non_collaborators;
        self.tp_total += o.tp_total;
        self.tpc_total += o.tpc_total;
        self.lub += o.lub;
        self.gub += o.gub;
        self.collaborators += o.collaborators;
        self.pairs += o.pairs;
    }

    fn scale(&mut self, k: f64) {
        for v in [
            &mut self.tp_collaborators,
            &mut self.tpc_collaborators,
            &mut self.tp_non_collaborators,
            &mut self.tp_total,
            &mut self.tpc_total,
            &mut self.lub,
            &mut self.gub,
            &mut self.collaborators,
            &mut self.pairs,
        ] {
            *v *= k;
        }
    }
}

/// Everything measured on one victim sample across the anchor days.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub days: Vec<DayRecord>,
    pub outcomes: Vec<PredictionOutcome>,
    pub coalitions: Vec<CoalitionSet>,
    /// Training-set size and partner count per collaborator-day.
    pub collaborator_knowledge: Vec<usize>,
    pub coalition_sizes: Vec<usize>,
    /// Per collaborating victim: TP and TP_c summed over its collaborating days.
    pub collaborator_tp: BTreeMap<EntityId, (usize, usize)>,
    pub merge_failures: usize,
}

/// Runs the daily loop on a fixed set of victims.
pub fn evaluate_sample(
    corpus: &Corpus,
    sample: &[EntityId],
    cfg: &ExperimentConfig,
) -> Result<SampleRun, ExperimentError> {
    let anchors = cfg.anchors(corpus)?;
    let universe = cfg.universe_size.unwrap_or(corpus.universe().len() as u64);
    let sub = corpus.subset(sample);
    let origin = sub.origin();
    let policy = cfg.policy();
    let mut run = SampleRun {
        days: Vec::with_capacity(anchors.len()),
        outcomes: Vec::new(),
        coalitions: Vec::with_capacity(anchors.len()),
        collaborator_knowledge: Vec::new(),
        coalition_sizes: Vec::new(),
        collaborator_tp: BTreeMap::new(),
        merge_failures: 0,
    };
    for anchor in anchors {
        let windows = TimeWindows::new(cfg.train_days, cfg.test_days, anchor)?;
        let train_sets: Vec<(EntityId, IpSet)> = sub
            .entities()
            .iter()
            .map(|(id, log)| (id.clone(), training_attackers(log, origin, &windows)))
            .collect();
        let global = IpSet::union_all(train_sets.iter().map(|(_, s)| s));
        let coalitions = if policy.kind == crate::selection::PolicyKind::GlobalTopPairs
            && policy.pair_budget == Some(0)
        {
            CoalitionSet::new()
        } else {
            let matrix = BenefitMatrix::from_sets(&train_sets, cfg.metric, universe, cfg.mode)?;
            establish_partnerships(&matrix, &policy)?
        };
        let mut opts = MergeOptions::new(cfg.strategy, windows.training());
        opts.mode = cfg.mode;
        opts.min_shared_age_days = cfg.min_shared_age_days;
        let merged = merge_coalitions(&sub, &coalitions, &opts);
        run.merge_failures += merged.failures.len();

        let mut rec = DayRecord {
            day: anchor,
            pairs: coalitions.pair_count() as f64,
            ..Default::default()
        };
        for ((id, log), (_, train)) in sub.entities().iter().zip(&train_sets) {
            let aug = &merged.logs[id];
            let base = predict_blacklist(&ewma_scores(log, origin, &windows, &cfg.ewma), &cfg.ewma);
            let collab =
                predict_blacklist(&ewma_scores(aug, origin, &windows, &cfg.ewma), &cfg.ewma);
            let tp = count_tp(&base, log, origin, &windows);
            let tpc = count_tp(&collab, log, origin, &windows);
            let bounds = upper_bounds_with(log, &global, origin, &windows);
            rec.tp_total += tp as f64;
            rec.tpc_total += tpc as f64;
            rec.lub += bounds.lub as f64;
            rec.gub += bounds.gub as f64;
            if coalitions.is_member(id) {
                rec.collaborators += 1.0;
                rec.tp_collaborators += tp as f64;
                rec.tpc_collaborators += tpc as f64;
                run.collaborator_knowledge.push(train.len());
                run.coalition_sizes
                    .push(coalitions.partners_of(id).map_or(0, |p| p.len()));
                let slot = run.collaborator_tp.entry(id.clone()).or_default();
                slot.0 += tp;
                slot.1 += tpc;
            } else {
                rec.tp_non_collaborators += tp as f64;
            }
            run.outcomes.push(PredictionOutcome {
                victim: id.clone(),
                day: DayIndex(anchor),
                predicted: collab.len(),
                tp,
                tp_collab: tpc,
                bounds,
            });
        }
        run.days.push(rec);
        run.coalitions.push(coalitions);
    }
    Ok(run)
}

/// Mean over days of the fraction of yesterday's partners kept today,
/// counting only entities that had partners yesterday.
pub fn partner_reuse(history: &[CoalitionSet]) -> Option<f64> {
    let daily: Vec<f64> = history
        .windows(2)
        .filter_map(|w| {
            let rates: Vec<f64> = w[0]
                .members()
                .filter(|(_, prev)| !prev.is_empty())
                .map(|(id, prev)| {
                    let kept = w[1]
                        .partners_of(id)
                        .map_or(0, |now| now.intersection(prev).count());
                    kept as f64 / prev.len() as f64
                })
                .collect();
            (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
        })
        .collect();
    (!daily.is_empty()).then(|| daily.iter().sum::<f64>() / daily.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Summary {
            count: values.len(),
            mean: Some(mean),
            sd: Some(var.sqrt()),
            median: Some(median),
            min: sorted.first().copied(),
            max: sorted.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub index: usize,
    pub seed: u64,
    pub tp_sum: usize,
    pub tpc_sum: usize,
    pub lub_sum: usize,
    pub gub_sum: usize,
    pub collaborators: usize,
    /// Mean over collaborators of their improvement; `None` if none is defined.
    pub mean_improvement: Option<f64>,
    pub undefined_improvements: usize,
    pub median_knowledge: Option<f64>,
    pub mean_coalition_size: Option<f64>,
    pub partner_reuse: Option<f64>,
    pub merge_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub entities: usize,
    pub events: usize,
    pub days: u32,
    pub universe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub anchors: (u32, u32),
    /// Mean over iterations of the daily sums.
    pub per_day: Vec<DayRecord>,
    pub totals: DayRecord,
    /// Per-collaborator improvements pooled over iterations.
    pub improvement: Summary,
    pub undefined_improvements: usize,
    pub collaborator_knowledge: Summary,
    pub coalition_size: Summary,
    pub partner_reuse: Option<f64>,
    pub iterations: Vec<IterationReport>,
    #[serde(skip)]
    pub first_outcomes: Vec<PredictionOutcome>,
}

impl RunReport {
    /// Writes the per-day series as CSV.
    pub fn write_daily_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "day",
            "tp_collaborators",
            "tpc_collaborators",
            "tp_non_collaborators",
            "tp_total",
            "tpc_total",
            "lub",
            "gub",
            "collaborators",
            "pairs",
        ])?;
        for d in &self.per_day {
            let nums = [
                d.tp_collaborators,
                d.tpc_collaborators,
                d.tp_non_collaborators,
                d.tp_total,
                d.tpc_total,
                d.lub,
                d.gub,
                d.collaborators,
                d.pairs,
            ];
            let mut row = vec![d.day.to_string()];
            row.extend(nums.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn median_of(values: &[usize]) -> Option<f64> {
    Summary::of(&values.iter().map(|&v| v as f64).collect::<Vec<_>>()).median
}

fn iteration_report(index: usize, seed: u64, run: &SampleRun) -> (IterationReport, Vec<f64>) {
    let sum = |f: fn(&PredictionOutcome) -> usize| run.outcomes.iter().map(f).sum::<usize>();
    let improvements: Vec<f64> = run
        .collaborator_tp
        .values()
        .filter_map(|&(tp, tpc)| improvement(tp, tpc))
        .collect();
    let undefined = run.collaborator_tp.len() - improvements.len();
    let report = IterationReport {
        index,
        seed,
        tp_sum: sum(|o| o.tp),
        tpc_sum: sum(|o| o.tp_collab),
        lub_sum: sum(|o| o.bounds.lub),
        gub_sum: sum(|o| o.bounds.gub),
        collaborators: run.collaborator_tp.len(),
        mean_improvement: Summary::of(&improvements).mean,
        undefined_improvements: undefined,
        median_knowledge: median_of(&run.collaborator_knowledge),
        mean_coalition_size: Summary::of(
            &run.coalition_sizes
                .iter()
                .map(|&v| v as f64)
                .collect::<Vec<_>>(),
        )
        .mean,
        partner_reuse: partner_reuse(&run.coalitions),
        merge_failures: run.merge_failures,
    };
    (report, improvements)
}

/// Runs every iteration: sample, then the daily loop, then aggregation.
pub fn run_experiment(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
) -> Result<RunReport, ExperimentError> {
    cfg.validate(corpus)?;
    let anchors = cfg.anchors(corpus)?;
    if cfg.iterations == 0 {
        return Err(ExperimentError::Invalid(
            "iterations must be at least 1".into(),
        ));
    }
    let one = |i: usize| {
        let sample = sample_victims(corpus, cfg.sample_size, cfg.seed, i);
        evaluate_sample(corpus, &sample, cfg)
    };
    let runs: Vec<Result<SampleRun, ExperimentError>> = match cfg.mode {
        Mode::Plaintext => (0..cfg.iterations).into_par_iter().map(one).collect(),
        Mode::Private => (0..cfg.iterations).map(one).collect(),
    };

    let mut per_day: Vec<DayRecord> = anchors
        .iter()
        .map(|&day| DayRecord {
            day,
            ..Default::default()
        })
        .collect();
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut improvements = Vec::new();
    let mut knowledge = Vec::new();
    let mut sizes = Vec::new();
    let mut reuse = Vec::new();
    let mut undefined = 0;
    let mut first_outcomes = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        for (acc, d) in per_day.iter_mut().zip(&run.days) {
            acc.add(d);
        }
        let (rep, imps) = iteration_report(i, cfg.seed.wrapping_add(i as u64), &run);
        improvements.extend(imps);
        undefined += rep.undefined_improvements;
        reuse.extend(rep.partner_reuse);
        knowledge.extend(run.collaborator_knowledge.iter().map(|&v| v as f64));
        sizes.extend(run.coalition_sizes.iter().map(|&v| v as f64));
        if i == 0 {
            first_outcomes = run.outcomes;
        }
        iterations.push(rep);
    }
    let k = 1.0 / cfg.iterations as f64;
    let mut totals = DayRecord::default();
    for d in &mut per_day {
        d.scale(k);
        totals.add(d);
    }
    totals.day = 0;
    Ok(RunReport {
        config: cfg.clone(),
        corpus: CorpusSummary {
            entities: corpus.len(),
            events: corpus.event_count(),
            days: corpus.days(),
            universe: corpus.universe().len(),
        },
        anchors: (anchors[0], *anchors.last().expect("nonempty")),
        per_day,
        totals,
        improvement: Summary::of(&improvements),
        undefined_improvements: undefined,
        collaborator_knowledge: Summary::of(&knowledge),
        coalition_size: Summary::of(&sizes),
        partner_reuse: Summary::of(&reuse).mean,
        iterations,
        first_outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    /// `(alpha, mean baseline TP sum over iterations)`.
    pub points: Vec<(f64, f64)>,
    /// Smallest alpha reaching the best sum.
    pub argmax: f64,
    /// Every alpha reaching the best sum.
    pub best: Vec<f64>,
}

/// Baseline TP sum of one sample for each alpha, without collaboration.
fn baseline_sums(
    corpus: &Corpus,
    sample: &[EntityId],
    cfg: &ExperimentConfig,
    alphas: &[f64],
    anchors: &[u32],
) -> Result<Vec<usize>, ExperimentError> {
    let origin = corpus.origin();
    let mut sums = vec![0usize; alphas.len()];
    for &anchor in anchors {
        let windows = TimeWindows::new(cfg.train_days, cfg.test_days, anchor)?;
        for id in sample {
            let Some(log) = corpus.entity(id) else {
                continue;
            };
            for (k, &alpha) in alphas.iter().enumerate() {
                let p = EwmaParams { alpha, ..cfg.ewma };
                let predicted = predict_blacklist(&ewma_scores(log, origin, &windows, &p), &p);
                sums[k] += count_tp(&predicted, log, origin, &windows);
            }
        }
    }
    Ok(sums)
}

/// Baseline TP for every alpha over the same victim samples.
pub fn alpha_sweep(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    alphas: &[f64],
) -> Result<AlphaSweep, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::Invalid("no alpha values".into()));
    }
    for &a in alphas {
        EwmaParams {
            alpha: a,
            ..cfg.ewma
        }
        .validate()?;
    }
    cfg.validate(corpus)?;
    let anchors = cfg.anchors(corpus)?;
    let per_iter: Vec<Result<Vec<usize>, ExperimentError>> = (0..cfg.iterations.max(1))
        .into_par_iter()
        .map(|i| {
            baseline_sums(
                corpus,
                &sample_victims(corpus, cfg.sample_size, cfg.seed, i),
                cfg,
                alphas,
                &anchors,
            )
        })
        .collect();
    let mut totals = vec![0usize; alphas.len()];
    for r in per_iter {
        for (t, v) in totals.iter_mut().zip(r?) {
            *t += v;
        }
    }
    let n = cfg.iterations.max(1) as f64;
    let points: Vec<(f64, f64)> = alphas
        .iter()
        .zip(&totals)
        .map(|(&a, &t)| (a, t as f64 / n))
        .collect();
    let top = *totals.iter().max().expect("nonempty");
    let mut best: Vec<f64> = alphas
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t == top)
        .map(|(&a, _)| a)
        .collect();
    best.sort_by(f64::total_cmp);
    Ok(AlphaSweep {
        points,
        argmax: best[0],
        best,
    })
}

/// Distinct entities that collaborate on at least one day.
pub fn collaborators(history: &[CoalitionSet]) -> BTreeSet<EntityId> {
    history
        .iter()
        .flat_map(|c| {
            c.members()
                .filter(|(_, p)| !p.is_empty())
                .map(|(id, _)| id.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{
        generate_synthetic, EntityLog, LogEvent, SyntheticParams, SECONDS_PER_DAY,
    };
    use std::net::Ipv4Addr;

    fn small_corpus(seed: u64) -> Corpus {
        let params = SyntheticParams {
            victims: 40,
            attackers: 300,
            days: 14,
            ..Default::default()
        };
        generate_synthetic(&params, seed).unwrap().corpus
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            sample_size: 20,
            iterations: 2,
            pair_budget: 5,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn identical_seed_identical_report() {
        let c = small_corpus(1);
        let a = run_experiment(&c, &small_cfg()).unwrap();
        let b = run_experiment(&c, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_day.len(), 14 - 7);
    }

    #[test]
    fn zero_budget_means_no_collaboration() {
        let c = small_corpus(2);
        let cfg = ExperimentConfig {
            pair_budget: 0,
            ..small_cfg()
        };
        let r = run_experiment(&c, &cfg).unwrap();
        for o in &r.first_outcomes {
            assert_eq!(o.tp, o.tp_collab);
        }
        assert_eq!(r.totals.tp_total, r.totals.tpc_total);
        assert_eq!(r.totals.collaborators, 0.0);
    }

    #[test]
    fn bounds_hold_per_victim_day() {
        let c = small_corpus(4);
        for strategy in MergeStrategy::ALL {
            let cfg = ExperimentConfig {
                strategy,
                ..small_cfg()
            };
            let sample = sample_victims(&c, cfg.sample_size, cfg.seed, 0);
            let run = evaluate_sample(&c, &sample, &cfg).unwrap();
            for o in &run.outcomes {
                assert!(o.tp <= o.bounds.lub && o.tp_collab <= o.bounds.gub, "{o:?}");
            }
            for d in &run.days {
                assert!(d.tp_total <= d.lub && d.tpc_total <= d.gub);
            }
        }
    }

    #[test]
    fn more_pairs_never_shrink_union_predictions() {
        let c = small_corpus(5);
        let mut last = 0.0;
        for k in [0, 2, 5, 20, 100] {
            let cfg = ExperimentConfig {
                pair_budget: k,
                strategy: MergeStrategy::UnionWithData,
                iterations: 1,
                ..small_cfg()
            };
            let r = run_experiment(&c, &cfg).unwrap();
            assert!(r.totals.tpc_total >= last, "K={k}");
            last = r.totals.tpc_total;
        }
    }

    #[test]
    fn rejects_bad_spans_and_samples() {
        let c = small_corpus(6);
        let cfg = ExperimentConfig {
            train_days: 14,
            ..small_cfg()
        };
        assert!(matches!(
            run_experiment(&c, &cfg),
            Err(ExperimentError::SpanTooShort { .. })
        ));
        let cfg = ExperimentConfig {
            sample_size: 1000,
            ..small_cfg()
        };
        assert!(matches!(
            run_experiment(&c, &cfg),
            Err(ExperimentError::SampleTooLarge { .. })
        ));
    }

    fn coal(pairs: &[(&str, &str)]) -> CoalitionSet {
        let mut c = CoalitionSet::new();
        for (a, b) in pairs {
            c.add_pair(&EntityId::new(a), &EntityId::new(b));
        }
        c
    }

    #[test]
    fn partner_reuse_cases() {
        let a = coal(&[("A", "B"), ("A", "C")]);
        assert_eq!(partner_reuse(&[a.clone(), a.clone()]), Some(1.0));
        assert_eq!(partner_reuse(&[a.clone(), coal(&[("D", "E")])]), Some(0.0));
        assert_eq!(partner_reuse(std::slice::from_ref(&a)), None);
        // day1 -> day2: A keeps B of {B,C} = 1/2, B keeps A = 1, C keeps none = 0
        // day2 -> day3: A keeps B of {B,D} = 1/2, B keeps A = 1, D loses A = 0
        let d2 = coal(&[("A", "B"), ("A", "D")]);
        let d3 = coal(&[("A", "B"), ("C", "D")]);
        let got = partner_reuse(&[a, d2, d3]).unwrap();
        let want = ((0.5 + 1.0 + 0.0) / 3.0 + (0.5 + 1.0 + 0.0) / 3.0) / 2.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    fn stationary_corpus() -> Corpus {
        let logs = (0..4u32).map(|v| {
            let events = (0..12i64)
                .flat_map(|d| {
                    (0..3u32).map(move |k| LogEvent {
                        timestamp: d * SECONDS_PER_DAY + 60,
                        source: Ipv4Addr::from(0x2d00_0000 + v * 10 + k),
                        port: 22,
                    })
                })
                .collect();
            EntityLog::new(EntityId::new(format!("v{v}")), events)
        });
        Corpus::with_origin(logs, 0)
    }

    #[test]
    fn stationary_attackers_make_alpha_irrelevant() {
        let c = stationary_corpus();
        let cfg = ExperimentConfig {
            sample_size: 4,
            iterations: 1,
            ..Default::default()
        };
        let alphas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let s = alpha_sweep(&c, &cfg, &alphas).unwrap();
        assert!(s.points.iter().all(|p| p.1 == s.points[0].1));
        assert_eq!(s.points[0].1, 4.0 * 3.0 * 5.0);
        assert_eq!(s.best.len(), 9);
    }

    #[test]
    fn single_alpha_sweep_equals_baseline_run() {
        let c = small_corpus(8);
        let cfg = ExperimentConfig {
            iterations: 1,
            ..small_cfg()
        };
        let s = alpha_sweep(&c, &cfg, &[0.9]).unwrap();
        let r = run_experiment(&c, &cfg).unwrap();
        assert_eq!(s.points[0].1, r.totals.tp_total);
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.median, Some(2.5));
        assert_eq!(s.mean, Some(2.5));
        assert_eq!(s.min, Some(1.0));
        assert!((s.sd.unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[]).mean, None);
    }

    #[test]
    fn daily_csv_header() {
        let c = small_corpus(9);
        let r = run_experiment(
            &c,
            &ExperimentConfig {
                iterations: 1,
                ..small_cfg()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_daily_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("day,tp_collaborators,"));
        assert_eq!(text.lines().count(), r.per_day.len() + 1);
    }
}
