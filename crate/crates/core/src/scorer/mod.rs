//! Document scoring: the scorer contract, the built-in multi-seed logistic
//! scorer, AUROC, and external score files.

pub mod features;
pub mod logistic;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocIdx};
use crate::{par, rng, Error, Result};

pub use features::FeatureHasher;
pub use logistic::{IrlsOptions, LogisticModel};

/// Scores handed to downstream log-odds computations are kept inside
/// `[SCORE_EPS, 1 - SCORE_EPS]`.
pub const SCORE_EPS: f64 = 1e-9;

/// One label for one document and class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledExample {
    pub doc_id: String,
    pub class: String,
    pub label: bool,
}

/// Anything that maps corpus documents to confidence scores in `[0, 1]`.
pub trait Scorer: Sync {
    fn score(&self, corpus: &Corpus, doc: DocIdx) -> f64;
}

/// Stratified, seeded train/test partition.
///
/// The train side gets `round(train_frac * n)` examples, split across labels
/// in proportion; each label keeps at least one test example when it has
/// two or more.
pub fn train_test_split(
    examples: &[LabeledExample],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::InvalidArgument(format!("train fraction {train_frac}")));
    }
    let mut pos: Vec<&LabeledExample> = examples.iter().filter(|e| e.label).collect();
    let mut neg: Vec<&LabeledExample> = examples.iter().filter(|e| !e.label).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(format!(
            "{} positive / {} negative examples",
            pos.len(),
            neg.len()
        )));
    }
    // canonical order first so the split depends only on content and seed
    pos.sort();
    neg.sort();
    let mut rng = rng::seeded(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n = examples.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let cap = |k: usize| if k >= 2 { k - 1 } else { k };
    let mut pos_train = ((n_train as f64) * pos.len() as f64 / n as f64).round() as usize;
    pos_train = pos_train.min(cap(pos.len()));
    let neg_train = n_train.saturating_sub(pos_train).min(cap(neg.len()));
    // hand any remainder the negatives could not absorb back to positives
    pos_train = (n_train - neg_train).min(cap(pos.len()));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, e) in pos.iter().enumerate() {
        if i < pos_train { train.push((*e).clone()) } else { test.push((*e).clone()) }
    }
    for (i, e) in neg.iter().enumerate() {
        if i < neg_train { train.push((*e).clone()) } else { test.push((*e).clone()) }
    }
    Ok((train, test))
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auroc(points: &[(f64, bool)]) -> Result<f64> {
    let n_pos = points.iter().filter(|p| p.1).count() as u64;
    let n_neg = points.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUROC needs both labels".into()));
    }
    let mut sorted: Vec<(f64, bool)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the Mann-Whitney U, kept integral
    let mut u2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 { p += 1 } else { q += 1 }
            j += 1;
        }
        u2 += p * (2 * neg_below + q);
        neg_below += q;
        i = j;
    }
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Settings for the built-in scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub n_seeds: usize,
    /// Share of the training split each seed fits on.
    pub subsample: f64,
    pub irls: IrlsOptions,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            n_seeds: 15,
            subsample: 0.9,
            irls: IrlsOptions::default(),
        }
    }
}

/// A feature row ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<u32>,
    pub label: bool,
}

/// Resolve labeled examples to feature rows.
pub fn feature_rows(
    corpus: &Corpus,
    hasher: &FeatureHasher,
    examples: &[LabeledExample],
) -> Result<Vec<FeatureRow>> {
    let idx = corpus.resolve_ids(examples.iter().map(|e| e.doc_id.as_str()))?;
    Ok(idx
        .iter()
        .zip(examples)
        .map(|(&d, e)| FeatureRow {
            features: hasher.features(&corpus.doc(d).tokens),
            label: e.label,
        })
        .collect())
}

/// The selected model of a multi-seed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorer {
    pub seed: u64,
    /// Test AUROC of the selected seed; `None` when the test split lacks a
    /// label and every seed ties.
    pub test_auroc: Option<f64>,
    pub model: LogisticModel,
}

fn seed_subsample(rows: &[FeatureRow], frac: f64, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = rng::substream(seed, index);
    let mut keep = Vec::new();
    for label in [true, false] {
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].label == label).collect();
        idx.shuffle(&mut rng);
        let k = ((frac * idx.len() as f64).ceil() as usize).clamp(1.min(idx.len()), idx.len());
        keep.extend_from_slice(&idx[..k]);
    }
    keep.sort_unstable();
    keep
}

/// Fit the built-in scorer once per seed on a seeded subsample of `train`
/// and keep the seed with the best test AUROC (ties to the lowest seed).
pub fn fit_baseline_multiseed(
    train: &[FeatureRow],
    test: &[FeatureRow],
    cfg: &ScorerConfig,
    seed: u64,
) -> Result<TrainedScorer> {
    let n_pos = train.iter().filter(|r| r.label).count();
    if n_pos == 0 || n_pos == train.len() {
        return Err(Error::SingleClass(format!(
            "training split has {n_pos} positives out of {}",
            train.len()
        )));
    }
    if cfg.n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be at least 1".into()));
    }
    let fits = par::map_range(cfg.n_seeds, |s| {
        let keep = seed_subsample(train, cfg.subsample, seed, s as u64);
        let rows: Vec<(&[u32], bool)> = keep
            .iter()
            .map(|&i| (train[i].features.as_slice(), train[i].label))
            .collect();
        let (model, _) = LogisticModel::fit(&rows, &cfg.irls);
        let points: Vec<(f64, bool)> = test
            .iter()
            .map(|r| (model.predict(&r.features), r.label))
            .collect();
        (s as u64, auroc(&points).ok(), model)
    });
    let mut best: Option<(u64, Option<f64>, LogisticModel)> = None;
    for (s, a, m) in fits {
        let better = match &best {
            None => true,
            Some((_, Some(b), _)) => a.is_some_and(|a| a > *b),
            Some((_, None, _)) => a.is_some(),
        };
        if better {
            best = Some((s, a, m));
        }
    }
    let (seed, test_auroc, model) = best.expect("n_seeds >= 1");
    Ok(TrainedScorer {
        seed,
        test_auroc,
        model,
    })
}

/// A trained model bound to a corpus for bulk scoring.
pub struct BoundScorer {
    dense: logistic::DenseModel,
    hasher: FeatureHasher,
}

impl BoundScorer {
    pub fn new(model: &LogisticModel, corpus: &Corpus) -> Self {
        BoundScorer {
            dense: model.dense(),
            hasher: FeatureHasher::new(corpus.vocab()),
        }
    }
}

impl Scorer for BoundScorer {
    fn score(&self, corpus: &Corpus, doc: DocIdx) -> f64 {
        self.dense.predict(&self.hasher.features(&corpus.doc(doc).tokens))
    }
}

/// Per-(class, iteration) scores, sorted by document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub class: String,
    pub iteration: u32,
    entries: Vec<(DocIdx, f64)>,
}

impl ScoreTable {
    /// Scores must be finite and within `[0, 1]`; they are clipped to
    /// `[SCORE_EPS, 1 - SCORE_EPS]`.
    pub fn new(class: &str, iteration: u32, mut entries: Vec<(DocIdx, f64)>) -> Result<Self> {
        if let Some(&(d, s)) = entries.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument(format!("score {s} for document #{d} outside [0, 1]")));
        }
        entries.sort_unstable_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate document in score table".into()));
        }
        for e in &mut entries {
            e.1 = e.1.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
        }
        Ok(ScoreTable {
            class: class.to_string(),
            iteration,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(DocIdx, f64)] {
        &self.entries
    }

    pub fn get(&self, doc: DocIdx) -> Option<f64> {
        self.entries
            .binary_search_by_key(&doc, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Keep only documents satisfying `keep`.
    pub fn retain(&mut self, keep: impl Fn(DocIdx) -> bool) {
        self.entries.retain(|e| keep(e.0));
    }

    /// Write `doc_id,score` rows with nine decimals.
    pub fn write_csv<W: Write>(&self, mut w: W, corpus: &Corpus) -> Result<()> {
        writeln!(w, "doc_id,score")?;
        for &(d, s) in &self.entries {
            writeln!(w, "{},{:.9}", crate::motif::csv_field(&corpus.doc(d).id), s)?;
        }
        Ok(())
    }
}

impl Scorer for ScoreTable {
    fn score(&self, _corpus: &Corpus, doc: DocIdx) -> f64 {
        self.get(doc).unwrap_or(0.0)
    }
}

/// Score every listed document. Output order and values do not depend on
/// the thread count.
pub fn score_pool<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &Corpus,
    docs: &[DocIdx],
    class: &str,
    iteration: u32,
) -> ScoreTable {
    let entries = par::map(docs, |&d| (d, scorer.score(corpus, d).clamp(0.0, 1.0)));
    ScoreTable::new(class, iteration, entries).expect("scores clamped and docs distinct")
}

/// Read a `doc_id,score` file (header optional) and validate it against a
/// corpus.
pub fn ingest_external_scores(
    path: &Path,
    corpus: &Corpus,
    class: &str,
    iteration: u32,
) -> Result<ScoreTable> {
    let file = std::fs::File::open(path)?;
    read_scores(BufReader::new(file), path, corpus, class, iteration)
}

pub fn read_scores<R: BufRead>(
    reader: R,
    path: &Path,
    corpus: &Corpus,
    class: &str,
    iteration: u32,
) -> Result<ScoreTable> {
    let mut rows: Vec<(String, f64, usize)> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((id, score)) = line.rsplit_once(',') else {
            return Err(Error::parse(path, line_no, "expected doc_id,score"));
        };
        let id = id.trim().trim_matches('"');
        let score: f64 = match score.trim().parse() {
            Ok(s) => s,
            Err(_) if line_no == 1 && rows.is_empty() => continue, // header
            Err(e) => return Err(Error::parse(path, line_no, format!("bad score: {e}"))),
        };
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(path, line_no, format!("score {score} outside [0, 1]")));
        }
        if let Some(prev) = seen.insert(id.to_string(), line_no) {
            return Err(Error::parse(
                path,
                line_no,
                format!("duplicate id {id:?} (first on line {prev})"),
            ));
        }
        rows.push((id.to_string(), score, line_no));
    }
    let docs = corpus.resolve_ids(rows.iter().map(|r| r.0.as_str()))?;
    ScoreTable::new(
        class,
        iteration,
        docs.into_iter().zip(rows).map(|(d, r)| (d, r.1)).collect(),
    )
}
