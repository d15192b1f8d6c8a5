//! Query strategies: stratified seed sampling, uncertainty sampling on raw
//! or calibrated scores, adaptive retrieval, and exploit-explore retrieval.

use std::collections::{HashSet, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, CalibrationReport};
use crate::corpus::{Corpus, DocIdx, MatchQuery, Pool};
use crate::motif::CompiledMotif;
use crate::scorer::ScoreTable;
use crate::skipgram::{compute_lift, select_top_lift, GramIndex, LiftEntry, SkipGram};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Stratified,
    Uncertainty,
    UncertaintyCalibrated,
    Adaptive,
    #[default]
    ExploitExplore,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Stratified,
        Strategy::Uncertainty,
        Strategy::UncertaintyCalibrated,
        Strategy::Adaptive,
        Strategy::ExploitExplore,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Stratified => "stratified",
            Strategy::Uncertainty => "uncertainty",
            Strategy::UncertaintyCalibrated => "uncertainty_calibrated",
            Strategy::Adaptive => "adaptive",
            Strategy::ExploitExplore => "exploit_explore",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

/// Why a document was queried.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Provenance {
    Exploit,
    Explore(String),
    Uncertainty,
    Top,
    Seed(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exploit => f.write_str("exploit"),
            Provenance::Explore(g) => write!(f, "explore:{g}"),
            Provenance::Uncertainty => f.write_str("uncertainty"),
            Provenance::Top => f.write_str("top"),
            Provenance::Seed(m) => write!(f, "seed:{m}"),
        }
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Ok(match s.as_str() {
            "exploit" => Provenance::Exploit,
            "uncertainty" => Provenance::Uncertainty,
            "top" => Provenance::Top,
            _ => {
                if let Some(g) = s.strip_prefix("explore:") {
                    Provenance::Explore(g.to_string())
                } else if let Some(m) = s.strip_prefix("seed:") {
                    Provenance::Seed(m.to_string())
                } else {
                    return Err(Error::InvalidArgument(format!("unknown provenance {s:?}")));
                }
            }
        })
    }
}

/// Documents selected for labeling for one class at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub class: String,
    pub iteration: u32,
    pub strategy: Strategy,
    pub docs: Vec<(DocIdx, Provenance)>,
    pub shortfall: bool,
}

impl QueryBatch {
    fn new(class: &str, iteration: u32, strategy: Strategy) -> Self {
        QueryBatch {
            class: class.to_string(),
            iteration,
            strategy,
            docs: Vec::new(),
            shortfall: false,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> Vec<DocIdx> {
        self.docs.iter().map(|d| d.0).collect()
    }

    /// One JSON object per document.
    pub fn write_manifest<W: Write>(&self, mut w: W, corpus: &Corpus) -> Result<()> {
        for (d, p) in &self.docs {
            let line = serde_json::json!({
                "doc_id": corpus.doc(*d).id,
                "class": self.class,
                "iteration": self.iteration,
                "strategy": self.strategy,
                "provenance": p.to_string(),
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// The `n` entries minimizing `key`, ties by ascending document.
fn smallest_by_key(scores: &ScoreTable, n: usize, key: impl Fn(f64) -> f64) -> Vec<DocIdx> {
    let mut v: Vec<(f64, DocIdx)> = scores.entries().iter().map(|&(d, s)| (key(s), d)).collect();
    let cmp = |a: &(f64, DocIdx), b: &(f64, DocIdx)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < v.len() {
        if n == 0 {
            return Vec::new();
        }
        v.select_nth_unstable_by(n - 1, cmp);
        v.truncate(n);
    }
    v.sort_unstable_by(cmp);
    v.into_iter().map(|e| e.1).collect()
}

/// `n` documents with scores closest to `center`.
pub fn query_uncertainty(scores: &ScoreTable, n: usize, center: f64, iteration: u32) -> QueryBatch {
    let mut b = QueryBatch::new(&scores.class, iteration, Strategy::Uncertainty);
    b.docs = smallest_by_key(scores, n, |s| (s - center).abs())
        .into_iter()
        .map(|d| (d, Provenance::Uncertainty))
        .collect();
    b.shortfall = b.docs.len() < n;
    b
}

/// Uncertainty sampling around the calibrated threshold estimated from
/// labeled `(score, label)` pairs.
pub fn query_uncertainty_calibrated(
    scores: &ScoreTable,
    eval_labels: &[(f64, bool)],
    n: usize,
    bootstrap: usize,
    seed: u64,
    iteration: u32,
) -> Result<(QueryBatch, CalibrationReport)> {
    let report = calibration::calibrate(eval_labels, bootstrap, seed, 1e-9)?;
    let mut b = query_uncertainty(scores, n, report.x_star, iteration);
    b.strategy = Strategy::UncertaintyCalibrated;
    Ok((b, report))
}

/// The `n` highest-scored documents.
pub fn query_adaptive(scores: &ScoreTable, n: usize, iteration: u32) -> QueryBatch {
    let mut b = QueryBatch::new(&scores.class, iteration, Strategy::Adaptive);
    b.docs = smallest_by_key(scores, n, |s| -s)
        .into_iter()
        .map(|d| (d, Provenance::Top))
        .collect();
    b.shortfall = b.docs.len() < n;
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploitExploreConfig {
    pub n_exploit: usize,
    pub top_size: usize,
    pub k_per_n: usize,
    pub per_gram: usize,
}

impl Default for ExploitExploreConfig {
    fn default() -> Self {
        ExploitExploreConfig {
            n_exploit: 50,
            top_size: 10_000,
            k_per_n: 5,
            per_gram: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitExploreOutcome {
    pub batch: QueryBatch,
    /// Selected grams, 2-grams first, each by descending lift.
    pub grams: Vec<LiftEntry>,
    /// The pool held fewer than `top_size` scored documents.
    pub top_truncated: bool,
    pub exploit_shortfall: bool,
    pub gram_shortfall: bool,
    /// Grams that matched fewer than `per_gram` fresh documents.
    pub explore_shortfall: bool,
}

/// Half the batch from the top-scored documents, the rest from documents
/// containing the highest-lift skip-grams of the top set.
#[allow(clippy::too_many_arguments)]
pub fn query_exploit_explore(
    scores: &ScoreTable,
    pool: &Pool,
    index2: &GramIndex,
    index3: &GramIndex,
    used_previous: &HashSet<SkipGram>,
    seed: u64,
    cfg: &ExploitExploreConfig,
    iteration: u32,
) -> Result<ExploitExploreOutcome> {
    let mut batch = QueryBatch::new(&scores.class, iteration, Strategy::ExploitExplore);
    let top_truncated = scores.len() < cfg.top_size;
    let mut top = smallest_by_key(scores, cfg.top_size, |s| -s);
    top.retain(|&d| pool.is_available(d));
    top.sort_unstable();
    if top.is_empty() {
        return Err(Error::Empty("scored sampling pool"));
    }

    let mut taken: BTreeSet<DocIdx> = BTreeSet::new();
    let mut exploit = top.clone();
    let mut r = rng::seeded(rng::derive(seed, "exploit"));
    let (picked, _) = exploit.partial_shuffle(&mut r, cfg.n_exploit.min(top.len()));
    for &d in picked.iter() {
        taken.insert(d);
        batch.docs.push((d, Provenance::Exploit));
    }
    let exploit_shortfall = picked.len() < cfg.n_exploit;

    let mut entries = compute_lift(&top, pool, index2)?.entries;
    entries.extend(compute_lift(&top, pool, index3)?.entries);
    let selected = select_top_lift(&entries, used_previous, cfg.k_per_n);

    let mut explore_shortfall = false;
    let vocab = pool.corpus().vocab();
    for e in &selected.selected {
        let motif = e.gram.to_motif().compile(vocab);
        let mut cands: Vec<DocIdx> = pool.matching(MatchQuery::Motif(&motif));
        let mut r = rng::seeded(rng::derive(seed, &format!("explore:{}", e.gram)));
        cands.shuffle(&mut r);
        let mut got = 0;
        for d in cands {
            if got == cfg.per_gram {
                break;
            }
            if taken.insert(d) {
                batch.docs.push((d, Provenance::Explore(e.gram.to_string())));
                got += 1;
            }
        }
        explore_shortfall |= got < cfg.per_gram;
    }
    batch.shortfall = exploit_shortfall || selected.shortfall || explore_shortfall;
    Ok(ExploitExploreOutcome {
        batch,
        grams: selected.selected,
        top_truncated,
        exploit_shortfall,
        gram_shortfall: selected.shortfall,
        explore_shortfall,
    })
}

/// Round-robin uniform sampling over documents matching each seed motif.
pub fn query_stratified(
    class: &str,
    seeds: &[CompiledMotif],
    pool: &Pool,
    n: usize,
    seed: u64,
    iteration: u32,
) -> QueryBatch {
    let mut b = QueryBatch::new(class, iteration, Strategy::Stratified);
    let mut queues: Vec<std::vec::IntoIter<DocIdx>> = seeds
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut c = pool.matching(MatchQuery::Motif(m));
            c.shuffle(&mut rng::substream(seed, i as u64));
            c.into_iter()
        })
        .collect();
    let mut taken = HashSet::new();
    let mut live = true;
    while b.docs.len() < n && live {
        live = false;
        for (i, q) in queues.iter_mut().enumerate() {
            if b.docs.len() == n {
                break;
            }
            for d in q.by_ref() {
                if taken.insert(d) {
                    b.docs.push((d, Provenance::Seed(seeds[i].display().to_string())));
                    live = true;
                    break;
                }
            }
        }
    }
    b.shortfall = b.docs.len() < n;
    b
}
