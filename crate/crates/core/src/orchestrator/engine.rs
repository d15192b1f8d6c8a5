//! The iteration driver.
//!
//! An experiment alternates between two phases. While labeling, the queue
//! holds the documents of one round and annotations are collected; `advance`
//! aggregates them into labels and computes the metrics that were waiting
//! on evaluation labels. When ready, `run_iteration` fits one model per
//! class on `S_i`, queries the next round from the sampling pool and draws
//! the evaluation sample from the evaluation pool.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::annotation::{aggregate_annotations, failed_annotators, validate_record, AnnotationRecord, AttentionKeys, DropReason};
use super::config::{Answer, EmbeddingConfig, ExclusionWindow, ExperimentConfig, LabelerMode};
use super::state::*;
use crate::calibration::{self, CalibrationReport};
use crate::corpus::{split_corpus, Corpus, DocIdx, MatchQuery, PoolPair};
use crate::evaluation::{
    check_convergence, compute_metrics, evaluation_sample, Embedder, FileEmbeddings, HashedBagEmbedder,
    MetricsRecord, RankedLabel, Ranking,
};
use crate::motif::{estimate_stats, read_seed_file, CompiledMotif, Motif, MotifStats, SeedRule};
use crate::scorer::{
    feature_rows, fit_baseline_multiseed, ingest_external_scores, score_pool, train_test_split, BoundScorer,
    FeatureHasher, LabeledExample, ScoreTable, Scorer,
};
use crate::skipgram::{build_gram_index, GramIndex, SkipGram, VocabFilter};
use crate::strategies::{
    query_adaptive, query_exploit_explore, query_stratified, query_uncertainty, Provenance, QueryBatch, Strategy,
};
use crate::{rng, Error, Result};

pub const ORACLE_ANNOTATOR: &str = "oracle";

/// A question shown with every task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub class: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBatch {
    pub round: Option<u32>,
    pub questions: Vec<Question>,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub accepted: usize,
    /// Records identical to ones already stored.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatus {
    pub class: String,
    pub labeled: usize,
    pub positives: usize,
    pub eval_labels: usize,
    pub latest: Option<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub strategy: Strategy,
    pub labeler: LabelerMode,
    pub iteration: u32,
    pub phase: Phase,
    pub corpus_size: usize,
    pub eval_pool_size: usize,
    pub sampling_available: usize,
    pub queue: usize,
    /// Queued documents still short of the required answers.
    pub pending: usize,
    pub annotations: usize,
    pub questions: Vec<Question>,
    pub classes: Vec<ClassStatus>,
}

#[derive(Default)]
struct Answered<'a> {
    who: BTreeSet<&'a str>,
    failed: usize,
}

impl Answered<'_> {
    fn contains(&self, annotator: &str) -> bool {
        self.who.contains(annotator)
    }

    fn len(&self) -> usize {
        self.who.len()
    }
}

struct Scored {
    eval: ScoreTable,
    samp: ScoreTable,
    labeled: Vec<(f64, bool)>,
}

/// An experiment bound to its corpus and state directory.
pub struct Experiment {
    config: ExperimentConfig,
    dir: StateDir,
    corpus: Arc<Corpus>,
    pools: PoolPair,
    state: ExperimentState,
    hasher: FeatureHasher,
    oracle: BTreeMap<String, Vec<CompiledMotif>>,
    embedder: Box<dyn Embedder + Send>,
}

fn split_seed(seed: u64) -> u64 {
    rng::derive(seed, "split")
}

impl Experiment {
    /// Load the corpus named in the config and start a new experiment.
    pub fn initialize(config: ExperimentConfig, dir: impl AsRef<Path>) -> Result<Self> {
        let corpus = Arc::new(Corpus::load_jsonl(&config.corpus)?);
        Self::initialize_with(config, corpus, dir)
    }

    /// Start a new experiment on an already loaded corpus: split it, draw
    /// the seed sample `L_0` and queue it for labeling.
    pub fn initialize_with(config: ExperimentConfig, corpus: Arc<Corpus>, dir: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let dir = StateDir::new(dir.as_ref());
        if dir.exists() {
            return Err(Error::State(format!(
                "{} already holds an experiment",
                dir.root().display()
            )));
        }
        let pools = split_corpus(Arc::clone(&corpus), config.split_ratio, split_seed(config.seed))?;
        let state = ExperimentState {
            version: STATE_VERSION,
            seed: config.seed,
            strategy: config.strategy,
            classes: config.class_names(),
            corpus_size: corpus.len(),
            iteration: 0,
            phase: Phase::Labeling { round: 0 },
            seeds: BTreeMap::new(),
            labeled: BTreeMap::new(),
            eval_labels: BTreeMap::new(),
            eval_pool: BTreeMap::new(),
            queue: BTreeMap::new(),
            attention: BTreeMap::new(),
            annotations: Vec::new(),
            queried: BTreeSet::new(),
            rounds: Vec::new(),
            metrics: Vec::new(),
            used_grams: BTreeMap::new(),
            models: BTreeMap::new(),
            pending_eval: BTreeMap::new(),
        };
        let mut exp = Self::assemble(config, dir, corpus, pools, state)?;
        exp.draw_seed_sample()?;
        exp.dir.save_config(&exp.config.to_toml()?)?;
        exp.save()?;
        Ok(exp)
    }

    /// Reopen an experiment from its state directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let d = StateDir::new(dir.as_ref());
        let config = ExperimentConfig::load(&d.path(CONFIG_FILE))?;
        let corpus = Arc::new(Corpus::load_jsonl(&config.corpus)?);
        Self::open_with(dir, corpus)
    }

    pub fn open_with(dir: impl AsRef<Path>, corpus: Arc<Corpus>) -> Result<Self> {
        let d = StateDir::new(dir.as_ref());
        let config = ExperimentConfig::load(&d.path(CONFIG_FILE))?;
        let state = d.load_state()?;
        if state.corpus_size != corpus.len() {
            return Err(Error::State(format!(
                "corpus has {} documents, experiment was started on {}",
                corpus.len(),
                state.corpus_size
            )));
        }
        let mut pools = split_corpus(Arc::clone(&corpus), config.split_ratio, split_seed(state.seed))?;
        let queried = corpus.resolve_ids(state.queried.iter().map(String::as_str))?;
        pools.sampling.exclude_ids(queried);
        Self::assemble(config, d, corpus, pools, state)
    }

    fn assemble(
        config: ExperimentConfig,
        dir: StateDir,
        corpus: Arc<Corpus>,
        pools: PoolPair,
        state: ExperimentState,
    ) -> Result<Self> {
        let mut oracle = BTreeMap::new();
        for c in &config.classes {
            let rules = c.oracle_motifs()?;
            oracle.insert(c.name.clone(), rules.iter().map(|m| m.compile(corpus.vocab())).collect());
        }
        let embedder: Box<dyn Embedder + Send> = match &config.evaluation.embedding {
            EmbeddingConfig::Hashed { dim } => Box::new(HashedBagEmbedder::new(&corpus, *dim)),
            EmbeddingConfig::File { path } => Box::new(FileEmbeddings::load(path, &corpus)?),
        };
        Ok(Experiment {
            hasher: FeatureHasher::new(corpus.vocab()),
            config,
            dir,
            corpus,
            pools,
            state,
            oracle,
            embedder,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn pools(&self) -> &PoolPair {
        &self.pools
    }

    pub fn state_dir(&self) -> &StateDir {
        &self.dir
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.state.metrics
    }

    /// The persisted metrics report.
    pub fn metrics_json(&self) -> Result<String> {
        self.state.metrics_json()
    }

    fn save(&self) -> Result<()> {
        self.dir.save_state(&self.state)
    }

    fn log_event(&self, event: serde_json::Value) -> Result<()> {
        self.dir.append_lines(EVENTS_FILE, &[event.to_string()])
    }

    fn id(&self, d: DocIdx) -> &str {
        &self.corpus.doc(d).id
    }

    fn idx(&self, id: &str) -> Result<DocIdx> {
        self.corpus
            .lookup(id)
            .ok_or_else(|| Error::State(format!("unknown document {id:?} in state")))
    }

    /// Seeds per class: configured ones, then those from the seed file.
    fn seed_candidates(&self) -> Result<BTreeMap<String, Vec<(Motif, Option<MotifStats>)>>> {
        let mut out: BTreeMap<String, Vec<(Motif, Option<MotifStats>)>> = BTreeMap::new();
        for c in &self.config.classes {
            let v = out.entry(c.name.clone()).or_default();
            v.extend(c.seed_motifs()?.into_iter().map(|m| (m, None)));
        }
        if let Some(path) = &self.config.seeds_file {
            for s in read_seed_file(path)? {
                match out.get_mut(&s.class) {
                    Some(v) => v.push((s.motif, s.stats)),
                    None => return Err(Error::Config(format!("seed file names unknown class {:?}", s.class))),
                }
            }
        }
        Ok(out)
    }

    fn oracle_label(&self, class: &str, d: DocIdx) -> Option<bool> {
        let rules = self.oracle.get(class)?;
        if rules.is_empty() {
            return None;
        }
        let toks = &self.corpus.doc(d).tokens;
        Some(rules.iter().any(|m| m.matches(toks)))
    }

    fn draw_seed_sample(&mut self) -> Result<()> {
        let seed = self.state.seed;
        let rule = SeedRule::default();
        let mut round = RoundRecord::default();
        let mut queue: BTreeMap<DocIdx, QueueItem> = BTreeMap::new();
        for (class, seeds) in self.seed_candidates()? {
            let mut states = Vec::new();
            let mut batch = BatchRecord {
                class: class.clone(),
                strategy: Strategy::Stratified,
                doc_ids: Vec::new(),
                provenance: Vec::new(),
                shortfall: false,
            };
            for (i, (motif, given)) in seeds.iter().enumerate() {
                let compiled = motif.compile(self.corpus.vocab());
                let stats = match given {
                    Some(s) => Some(*s),
                    None if self.config.labeler == LabelerMode::Oracle => Some(estimate_stats(
                        motif,
                        &self.pools.eval,
                        |d| self.oracle_label(&class, d),
                        self.config.stats_sample,
                        rng::derive(seed, &format!("stats:{class}:{i}")),
                    )?),
                    None => None,
                };
                let retained = !self.config.filter_seeds || stats.is_none_or(|s| rule.retains(&s));
                let matched = self.pools.sampling.matching(MatchQuery::Motif(&compiled)).len();
                let mut sampled = 0;
                if retained {
                    let sample = self.pools.sampling.sample_matching(
                        MatchQuery::Motif(&compiled),
                        self.config.init_per_seed,
                        rng::derive(seed, &format!("init:{class}:{i}")),
                    );
                    if sample.docs.is_empty() {
                        tracing::warn!(class = %class, seed = %motif, "seed matches no document; skipped");
                    }
                    batch.shortfall |= sample.shortfall;
                    sampled = sample.docs.len();
                    let prov = Provenance::Seed(compiled.display().to_string());
                    for d in sample.docs {
                        queue.entry(d).or_default().query.push((class.clone(), prov.to_string()));
                        batch.doc_ids.push(self.id(d).to_string());
                        batch.provenance.push(prov.to_string());
                    }
                }
                states.push(SeedState {
                    motif: motif.to_string(),
                    stats,
                    retained,
                    matched,
                    sampled,
                });
            }
            self.state.seeds.insert(class, states);
            round.batches.push(batch);
        }
        if queue.is_empty() {
            return Err(Error::Empty("seed sample (every seed matched no document)"));
        }
        self.pools.sampling.exclude_ids(queue.keys().copied());
        for (&d, item) in &queue {
            let id = self.id(d).to_string();
            self.state.queried.insert(id.clone());
            self.state.queue.insert(id, item.clone());
        }
        round.queued = queue.len();
        self.open_round(0);
        self.write_batches(&round)?;
        self.log_event(serde_json::json!({"event": "init", "queued": round.queued, "seeds": self.state.seeds}))?;
        self.state.rounds.push(round);
        Ok(())
    }

    fn write_batches(&self, round: &RoundRecord) -> Result<()> {
        let mut lines = Vec::new();
        for b in &round.batches {
            for (id, p) in b.doc_ids.iter().zip(&b.provenance) {
                lines.push(
                    serde_json::json!({
                        "doc_id": id,
                        "class": b.class,
                        "iteration": round.round,
                        "strategy": b.strategy,
                        "provenance": p,
                    })
                    .to_string(),
                );
            }
        }
        self.dir.append_lines(BATCHES_FILE, &lines)
    }

    /// Register attention-check task ids for a new labeling round.
    fn open_round(&mut self, round: u32) {
        self.state.phase = Phase::Labeling { round };
        self.state.iteration = round;
        self.state.attention.clear();
        if self.config.labeler == LabelerMode::Human {
            for k in 0..self.config.human.attention_checks.len() {
                let id = format!("{:016x}", rng::derive(self.state.seed, &format!("attention:{round}:{k}")));
                self.state.attention.insert(id, k);
            }
        }
    }

    fn attention_keys(&self) -> AttentionKeys {
        self.state
            .attention
            .iter()
            .map(|(id, &k)| (id.clone(), self.config.human.attention_checks[k].clone()))
            .collect()
    }

    fn agreement(&self) -> usize {
        match self.config.labeler {
            LabelerMode::Oracle => 1,
            LabelerMode::Human => self.config.human.agreement,
        }
    }

    pub fn questions(&self) -> Vec<Question> {
        self.config
            .classes
            .iter()
            .map(|c| Question {
                class: c.name.clone(),
                text: c.question.clone(),
            })
            .collect()
    }

    /// Who answered each task of the open round.
    fn answered(&self) -> BTreeMap<&str, Answered<'_>> {
        let failed = failed_annotators(&self.state.annotations, &self.attention_keys());
        let mut out: BTreeMap<&str, Answered<'_>> = BTreeMap::new();
        for r in &self.state.annotations {
            let e = out.entry(&r.doc_id).or_default();
            if e.who.insert(&r.annotator) && failed.contains(&r.annotator) {
                e.failed += 1;
            }
        }
        out
    }

    fn open_round_number(&self) -> Option<u32> {
        match self.state.phase {
            Phase::Labeling { round } => Some(round),
            Phase::Ready => None,
        }
    }

    /// Up to `n` tasks for `annotator`: queued documents they have not
    /// answered and that still need answers, with the round's attention
    /// checks mixed in at seeded positions.
    pub fn next_tasks(&self, annotator: &str, n: usize) -> TaskBatch {
        let questions = self.questions();
        let Some(round) = self.open_round_number() else {
            return TaskBatch {
                round: None,
                questions,
                tasks: Vec::new(),
            };
        };
        let answered = self.answered();
        let need = self.agreement();
        let mut docs: Vec<&String> = self
            .state
            .queue
            .keys()
            .filter(|id| {
                let who = answered.get(id.as_str());
                !who.is_some_and(|w| w.contains(annotator)) && who.map_or(0, |w| w.len() - w.failed) < need
            })
            .collect();
        docs.shuffle(&mut rng::seeded(rng::derive(self.state.seed, &format!("tasks:{round}"))));

        let checks: Vec<&String> = if docs.is_empty() {
            Vec::new()
        } else {
            self.state
                .attention
                .keys()
                .filter(|id| !answered.get(id.as_str()).is_some_and(|w| w.contains(annotator)))
                .take(n.saturating_sub(1))
                .collect()
        };
        docs.truncate(n - checks.len().min(n));
        let mut tasks: Vec<Task> = docs
            .into_iter()
            .map(|id| Task {
                doc_id: id.clone(),
                text: self.corpus.doc(self.corpus.lookup(id).expect("queued id")).text.clone(),
            })
            .collect();
        let mut r = rng::seeded(rng::derive(self.state.seed, &format!("attention:{round}:{annotator}")));
        for id in checks {
            let at = r.random_range(0..=tasks.len());
            let k = self.state.attention[id];
            tasks.insert(
                at,
                Task {
                    doc_id: id.clone(),
                    text: self.config.human.attention_checks[k].text.clone(),
                },
            );
        }
        TaskBatch {
            round: Some(round),
            questions,
            tasks,
        }
    }

    /// Store raw annotations for the open round. The whole submission is
    /// rejected if any record is malformed, names a document outside the
    /// queue, or contradicts an earlier record by the same annotator.
    pub fn submit_annotations(&mut self, records: &[AnnotationRecord]) -> Result<SubmitOutcome> {
        let classes = self.state.classes.clone();
        let errors: Vec<_> = records
            .iter()
            .enumerate()
            .flat_map(|(i, r)| validate_record(i, r, &classes))
            .collect();
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }
        let Some(round) = self.open_round_number() else {
            return Err(Error::Conflict("no labeling round is open".into()));
        };
        let mut seen: BTreeMap<(&str, &str), &AnnotationRecord> = self
            .state
            .annotations
            .iter()
            .map(|r| ((r.doc_id.as_str(), r.annotator.as_str()), r))
            .collect();
        let mut fresh = Vec::new();
        let mut duplicates = 0;
        for r in records {
            if !self.state.queue.contains_key(&r.doc_id) && !self.state.attention.contains_key(&r.doc_id) {
                return Err(Error::Conflict(format!("document {:?} is not in the labeling queue", r.doc_id)));
            }
            match seen.get(&(r.doc_id.as_str(), r.annotator.as_str())) {
                Some(prev) if *prev == r => duplicates += 1,
                Some(_) => {
                    return Err(Error::Conflict(format!(
                        "annotator {:?} already answered {:?} differently",
                        r.annotator, r.doc_id
                    )))
                }
                None => {
                    seen.insert((&r.doc_id, &r.annotator), r);
                    fresh.push(r.clone());
                }
            }
        }
        if !fresh.is_empty() {
            self.log_event(serde_json::json!({"event": "annotations", "round": round, "records": fresh}))?;
            self.state.annotations.extend(fresh.iter().cloned());
            self.save()?;
        }
        Ok(SubmitOutcome {
            accepted: fresh.len(),
            duplicates,
        })
    }

    /// Answer every queued document with the oracle rules.
    pub fn oracle_annotate(&mut self) -> Result<SubmitOutcome> {
        let mut records = Vec::with_capacity(self.state.queue.len());
        for id in self.state.queue.keys() {
            let d = self.idx(id)?;
            let mut answers = BTreeMap::new();
            for c in &self.state.classes {
                let label = self
                    .oracle_label(c, d)
                    .ok_or_else(|| Error::Config(format!("class {c:?} has no oracle rules")))?;
                answers.insert(c.clone(), if label { Answer::Yes } else { Answer::No });
            }
            records.push(AnnotationRecord {
                doc_id: id.clone(),
                annotator: ORACLE_ANNOTATOR.into(),
                answers,
            });
        }
        self.submit_annotations(&records)
    }

    /// Close the open labeling round: aggregate its annotations into
    /// labels, grow the labeled sets and compute pending metrics. In oracle
    /// mode an unlabeled round is answered by the oracle first.
    pub fn advance(&mut self) -> Result<AggregationSummary> {
        let Some(round) = self.open_round_number() else {
            return Err(Error::Conflict("no labeling round is open".into()));
        };
        if self.config.labeler == LabelerMode::Oracle && self.state.annotations.is_empty() {
            self.oracle_annotate()?;
        }
        if self.state.annotations.is_empty() && !self.state.queue.is_empty() {
            return Err(Error::Conflict("no annotations were submitted for this round".into()));
        }
        let agg = aggregate_annotations(
            &self.state.annotations,
            &self.state.classes,
            self.agreement(),
            &self.attention_keys(),
        );
        let mut summary = AggregationSummary {
            records: self.state.annotations.len(),
            labels: agg.labels.len(),
            failed_annotators: agg.failed_annotators.iter().cloned().collect(),
            ..AggregationSummary::default()
        };
        for reason in [DropReason::Unsure, DropReason::Disagreement, DropReason::Insufficient] {
            summary.set_drops(reason, agg.count(reason));
        }
        for (l, &support) in agg.labels.iter().zip(&agg.support) {
            let Some(item) = self.state.queue.get(&l.doc_id) else { continue };
            if l.label {
                *summary.positives.entry(l.class.clone()).or_default() += 1;
            }
            if !item.query.is_empty() {
                self.state.labeled.entry(l.class.clone()).or_default().insert(
                    l.doc_id.clone(),
                    LabelEntry {
                        label: l.label,
                        round,
                        support,
                    },
                );
            }
            if !item.eval.is_empty() {
                self.state
                    .eval_labels
                    .entry(l.class.clone())
                    .or_default()
                    .insert(l.doc_id.clone(), l.label);
            }
        }
        let queue = std::mem::take(&mut self.state.queue);
        for (id, item) in &queue {
            for c in &item.eval {
                if self.state.eval_labels.get(c).is_some_and(|m| m.contains_key(id)) {
                    self.state.eval_pool.entry(c.clone()).or_default().insert(id.clone());
                }
            }
        }
        self.finish_pending_metrics()?;

        if let Some(r) = self.state.rounds.iter_mut().find(|r| r.round == round) {
            r.aggregation = Some(summary.clone());
        }
        self.log_event(serde_json::json!({"event": "advance", "round": round, "aggregation": summary}))?;
        self.state.annotations.clear();
        self.state.attention.clear();
        self.state.phase = Phase::Ready;
        self.state.iteration = round;
        self.save()?;
        Ok(summary)
    }

    fn finish_pending_metrics(&mut self) -> Result<()> {
        let pending = std::mem::take(&mut self.state.pending_eval);
        let opts = self.config.evaluation.metrics_options();
        for (class, p) in pending {
            let labels = self.state.eval_labels.get(&class);
            let pool = self.state.eval_pool.get(&class);
            let mut items = Vec::new();
            let mut positives = Vec::new();
            for id in pool.into_iter().flatten() {
                let (Some(&rank), Some(&label)) = (p.ranks.get(id), labels.and_then(|m| m.get(id))) else {
                    continue;
                };
                items.push(RankedLabel { rank, label });
                if label {
                    if let Some(v) = self.embedder.embed(&self.corpus, self.idx(id)?) {
                        positives.push(v);
                    }
                }
            }
            let rec = compute_metrics(
                &class,
                self.state.strategy.as_str(),
                p.iteration,
                &items,
                &positives,
                p.pool_size,
                p.truncated,
                &opts,
                rng::derive(self.state.seed, &format!("metrics:{class}:{}", p.iteration)),
            );
            match rec {
                Ok(mut rec) => {
                    let mut history: Vec<MetricsRecord> =
                        self.state.class_metrics(&class).into_iter().cloned().collect();
                    history.push(rec.clone());
                    rec.converged = check_convergence(&history, opts.window, opts.alpha);
                    self.log_event(serde_json::json!({"event": "metrics", "record": rec}))?;
                    self.state.metrics.push(rec);
                }
                Err(e) => {
                    tracing::warn!(class = %class, iteration = p.iteration, error = %e, "metrics skipped");
                    if let Some(r) = self.state.rounds.iter_mut().find(|r| r.round == p.iteration + 1) {
                        r.notes.entry(class.clone()).or_default().push(format!("metrics: {e}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn examples(&self, class: &str) -> Vec<LabeledExample> {
        self.state
            .labeled
            .get(class)
            .into_iter()
            .flatten()
            .map(|(id, e)| LabeledExample {
                doc_id: id.clone(),
                class: class.to_string(),
                label: e.label,
            })
            .collect()
    }

    fn gram_indexes(&self) -> Result<(GramIndex, GramIndex)> {
        let ee = &self.config.exploit_explore;
        let filter = match &ee.vocab_file {
            Some(p) => VocabFilter::from_file(p)?,
            None => VocabFilter::default(),
        };
        let sampling = &self.pools.sampling;
        Ok((
            build_gram_index(sampling, 2, &filter, ee.min_freq)?,
            build_gram_index(sampling, 3, &filter, ee.min_freq)?,
        ))
    }

    /// Fit, score, query and draw evaluation samples for every class, then
    /// open the next labeling round. A class that fails is recorded in the
    /// round notes and skipped.
    pub fn run_iteration(&mut self) -> Result<&RoundRecord> {
        if self.state.phase != Phase::Ready {
            return Err(Error::Conflict("the open labeling round must be advanced first".into()));
        }
        let i = self.state.iteration;
        let mut round = RoundRecord {
            round: i + 1,
            ..RoundRecord::default()
        };
        let indexes = if self.state.strategy == Strategy::ExploitExplore {
            Some(self.gram_indexes()?)
        } else {
            None
        };
        for class in self.state.classes.clone() {
            if let Err(e) = self.run_class(&class, i, indexes.as_ref(), &mut round) {
                tracing::warn!(class = %class, iteration = i, error = %e, "class skipped");
                round.notes.entry(class).or_default().push(e.to_string());
            }
        }
        round.queued = self.state.queue.len();
        self.open_round(i + 1);
        self.write_batches(&round)?;
        self.log_event(serde_json::json!({
            "event": "iteration",
            "iteration": i,
            "queued": round.queued,
            "notes": round.notes,
        }))?;
        self.state.rounds.push(round);
        self.save()?;
        Ok(self.state.rounds.last().expect("just pushed"))
    }

    /// Scores over the evaluation pool and the available sampling pool,
    /// plus `(score, label)` for the labeled set.
    fn score_tables(&mut self, class: &str, i: u32, round: &mut RoundRecord) -> Result<Scored> {
        let seed = self.state.seed;
        if let Some(dir) = &self.config.scorer.external_scores {
            let path = dir.join(format!("{class}_{i}.csv"));
            let table = ingest_external_scores(&path, &self.corpus, class, i)?;
            let labeled = self.labeled_points(class, |d| table.get(d));
            let mut eval = table.clone();
            eval.retain(|d| self.pools.eval.contains(d));
            let mut samp = table;
            samp.retain(|d| self.pools.sampling.is_available(d));
            return Ok(Scored { eval, samp, labeled });
        }
        let examples = self.examples(class);
        let (train, test) = train_test_split(
            &examples,
            self.config.scorer.train_frac,
            rng::derive(seed, &format!("split:{class}:{i}")),
        )?;
        let train_rows = feature_rows(&self.corpus, &self.hasher, &train)?;
        let test_rows = feature_rows(&self.corpus, &self.hasher, &test)?;
        let fitted = fit_baseline_multiseed(
            &train_rows,
            &test_rows,
            &self.config.scorer.scorer_config(),
            rng::derive(seed, &format!("fit:{class}:{i}")),
        )?;
        round.models.insert(
            class.to_string(),
            ModelSummary {
                seed: fitted.seed,
                test_auroc: fitted.test_auroc,
                train_size: train.len(),
                test_size: test.len(),
            },
        );
        let scorer = BoundScorer::new(&fitted.model, &self.corpus);
        let labeled = self.labeled_points(class, |d| Some(scorer.score(&self.corpus, d)));
        self.state.models.insert(
            class.to_string(),
            ModelSnapshot {
                iteration: i,
                seed: fitted.seed,
                test_auroc: fitted.test_auroc,
                model: fitted.model,
            },
        );
        let eval = score_pool(&scorer, &self.corpus, self.pools.eval.members(), class, i);
        let samp = score_pool(&scorer, &self.corpus, &self.pools.sampling.available(), class, i);
        Ok(Scored { eval, samp, labeled })
    }

    fn labeled_points(&self, class: &str, score: impl Fn(DocIdx) -> Option<f64>) -> Vec<(f64, bool)> {
        self.state
            .labeled
            .get(class)
            .into_iter()
            .flatten()
            .filter_map(|(id, e)| Some((score(self.corpus.lookup(id)?)?, e.label)))
            .collect()
    }

    fn run_class(&mut self, class: &str, i: u32, indexes: Option<&(GramIndex, GramIndex)>, round: &mut RoundRecord) -> Result<()> {
        let seed = self.state.seed;
        let n = self.config.batch_size;
        let next = i + 1;
        let query_seed = rng::derive(seed, &format!("query:{class}:{i}"));
        let Scored {
            eval: eval_table,
            samp: samp_table,
            labeled,
        } = self.score_tables(class, i, round)?;

        let batch: QueryBatch = match self.state.strategy {
            Strategy::Stratified => {
                let seeds: Vec<CompiledMotif> = self
                    .state
                    .seeds
                    .get(class)
                    .into_iter()
                    .flatten()
                    .filter(|s| s.retained)
                    .map(|s| Motif::parse(&s.motif).map(|m| m.compile(self.corpus.vocab())))
                    .collect::<Result<_>>()?;
                query_stratified(class, &seeds, &self.pools.sampling, n, query_seed, next)
            }
            Strategy::Uncertainty => query_uncertainty(&samp_table, n, 0.5, next),
            Strategy::UncertaintyCalibrated => {
                let eval_points: Vec<(f64, bool)> = self
                    .state
                    .eval_labels
                    .get(class)
                    .into_iter()
                    .flatten()
                    .filter_map(|(id, &l)| Some((eval_table.get(self.corpus.lookup(id)?)?, l)))
                    .collect();
                let mut report: Option<CalibrationReport> = None;
                for points in [eval_points, labeled] {
                    if points.is_empty() {
                        continue;
                    }
                    match calibration::calibrate(
                        &points,
                        self.config.calibration.bootstrap,
                        rng::derive(seed, &format!("calibrate:{class}:{i}")),
                        self.config.calibration.tol,
                    ) {
                        Ok(r) => {
                            report = Some(r);
                            break;
                        }
                        Err(e) => round
                            .notes
                            .entry(class.to_string())
                            .or_default()
                            .push(format!("calibration: {e}")),
                    }
                }
                let center = report.as_ref().map_or(0.5, |r| r.x_star);
                if let Some(r) = report {
                    round.calibration.insert(class.to_string(), r);
                } else {
                    round
                        .notes
                        .entry(class.to_string())
                        .or_default()
                        .push("calibration unavailable; centered on 0.5".into());
                }
                let mut b = query_uncertainty(&samp_table, n, center, next);
                b.strategy = Strategy::UncertaintyCalibrated;
                b
            }
            Strategy::Adaptive => query_adaptive(&samp_table, n, next),
            Strategy::ExploitExplore => {
                let (idx2, idx3) = indexes.ok_or(Error::State("gram indexes missing".into()))?;
                let history = self.state.used_grams.get(class);
                let used: HashSet<SkipGram> = match self.config.exploit_explore.exclusion_window {
                    ExclusionWindow::Previous => history.and_then(|h| h.last()).into_iter().flatten().cloned().map(SkipGram).collect(),
                    ExclusionWindow::All => history.into_iter().flatten().flatten().cloned().map(SkipGram).collect(),
                };
                let out = query_exploit_explore(
                    &samp_table,
                    &self.pools.sampling,
                    idx2,
                    idx3,
                    &used,
                    query_seed,
                    &self.config.exploit_explore.strategy_config(),
                    next,
                )?;
                self.state
                    .used_grams
                    .entry(class.to_string())
                    .or_default()
                    .push(out.grams.iter().map(|e| e.gram.0.clone()).collect());
                round.grams.insert(class.to_string(), out.grams);
                out.batch
            }
        };

        let mut rec = BatchRecord {
            class: class.to_string(),
            strategy: batch.strategy,
            doc_ids: Vec::with_capacity(batch.len()),
            provenance: Vec::with_capacity(batch.len()),
            shortfall: batch.shortfall,
        };
        for (d, p) in &batch.docs {
            let id = self.id(*d).to_string();
            if !self.state.queried.insert(id.clone()) {
                return Err(Error::State(format!("document {id:?} queried twice")));
            }
            self.state
                .queue
                .entry(id.clone())
                .or_default()
                .query
                .push((class.to_string(), p.to_string()));
            rec.doc_ids.push(id);
            rec.provenance.push(p.to_string());
        }
        self.pools.sampling.exclude_ids(batch.ids());
        round.batches.push(rec);

        // evaluation sample under the current model
        let ranking = Ranking::new(&eval_table);
        let sample = evaluation_sample(&ranking, &self.config.evaluation.schedule());
        let mut ids = Vec::with_capacity(sample.docs.len());
        for &(d, _) in &sample.docs {
            let id = self.id(d).to_string();
            if self.state.eval_labels.get(class).is_some_and(|m| m.contains_key(&id)) {
                self.state.eval_pool.entry(class.to_string()).or_default().insert(id.clone());
            } else {
                let item = self.state.queue.entry(id.clone()).or_default();
                if !item.eval.iter().any(|c| c == class) {
                    item.eval.push(class.to_string());
                }
            }
            ids.push(id);
        }
        let mut ranks = BTreeMap::new();
        for id in self.state.eval_pool.get(class).into_iter().flatten().chain(&ids) {
            if let Some(r) = self.corpus.lookup(id).and_then(|d| ranking.rank(d)) {
                ranks.insert(id.clone(), r as u64);
            }
        }
        self.state.pending_eval.insert(
            class.to_string(),
            PendingEval {
                iteration: i,
                pool_size: ranking.len(),
                truncated: sample.truncated,
                ranks,
            },
        );
        round.eval_samples.insert(class.to_string(), ids);
        Ok(())
    }

    fn model_score(&self, class: &str, d: DocIdx) -> Option<f64> {
        let m = self.state.models.get(class)?;
        Some(m.model.predict(&self.hasher.features(&self.corpus.doc(d).tokens)))
    }

    /// Advance through `rounds` complete oracle iterations: label the open
    /// round, advance, run the next iteration. Oracle mode only.
    pub fn run_oracle(&mut self, rounds: u32) -> Result<()> {
        if self.config.labeler != LabelerMode::Oracle {
            return Err(Error::Config("automatic iterations need labeler = \"oracle\"".into()));
        }
        for _ in 0..rounds {
            if self.state.phase != Phase::Ready {
                self.advance()?;
            }
            self.run_iteration()?;
        }
        if self.state.phase != Phase::Ready {
            self.advance()?;
        }
        Ok(())
    }

    pub fn session(&self) -> Session {
        let answered = self.answered();
        let need = self.agreement();
        let pending = self
            .state
            .queue
            .keys()
            .filter(|id| answered.get(id.as_str()).map_or(0, |w| w.len() - w.failed) < need)
            .count();
        let classes = self
            .state
            .classes
            .iter()
            .map(|c| {
                let labeled = self.state.labeled.get(c);
                ClassStatus {
                    class: c.clone(),
                    labeled: labeled.map_or(0, BTreeMap::len),
                    positives: labeled.map_or(0, |m| m.values().filter(|e| e.label).count()),
                    eval_labels: self.state.eval_pool.get(c).map_or(0, BTreeSet::len),
                    latest: self.state.class_metrics(c).last().map(|m| (*m).clone()),
                }
            })
            .collect();
        Session {
            strategy: self.state.strategy,
            labeler: self.config.labeler,
            iteration: self.state.iteration,
            phase: self.state.phase,
            corpus_size: self.state.corpus_size,
            eval_pool_size: self.pools.eval.len(),
            sampling_available: self.pools.sampling.available_len(),
            queue: self.state.queue.len(),
            pending,
            annotations: self.state.annotations.len(),
            questions: self.questions(),
            classes,
        }
    }

    /// Every aggregated label, sorted by document then class.
    pub fn labels(&self) -> Vec<(LabeledExample, u32)> {
        let mut out: Vec<(LabeledExample, u32)> = self
            .state
            .labeled
            .iter()
            .flat_map(|(c, m)| {
                m.iter().map(move |(id, e)| {
                    (
                        LabeledExample {
                            doc_id: id.clone(),
                            class: c.clone(),
                            label: e.label,
                        },
                        e.round,
                    )
                })
            })
            .collect();
        out.sort();
        out
    }

    /// Scores of the current model of `class` over the evaluation pool.
    pub fn eval_scores(&self, class: &str) -> Result<ScoreTable> {
        let m = self
            .state
            .models
            .get(class)
            .ok_or_else(|| Error::State(format!("no model for class {class:?} yet")))?;
        let scorer = BoundScorer::new(&m.model, &self.corpus);
        Ok(score_pool(&scorer, &self.corpus, self.pools.eval.members(), class, m.iteration))
    }

    /// Scores of the current model of `class` over the available sampling pool.
    pub fn sampling_scores(&self, class: &str) -> Result<ScoreTable> {
        let m = self
            .state
            .models
            .get(class)
            .ok_or_else(|| Error::State(format!("no model for class {class:?} yet")))?;
        let scorer = BoundScorer::new(&m.model, &self.corpus);
        Ok(score_pool(
            &scorer,
            &self.corpus,
            &self.pools.sampling.available(),
            class,
            m.iteration,
        ))
    }

    /// `(score, label)` pairs of the evaluation labels of `class` under its
    /// current model.
    pub fn eval_points(&self, class: &str) -> Result<Vec<(f64, bool)>> {
        let mut out = Vec::new();
        for (id, &label) in self.state.eval_labels.get(class).into_iter().flatten() {
            let d = self.idx(id)?;
            let s = self
                .model_score(class, d)
                .ok_or_else(|| Error::State(format!("no model for class {class:?} yet")))?;
            out.push((s, label));
        }
        Ok(out)
    }
}
