//! Planted-positive corpora for end-to-end experiments.
//!
//! Every positive belongs to a template family identified by two core
//! pseudo-words appearing in order, and carries a shared context bigram.
//! Core words also occur alone in decoy negatives, and the context bigram
//! occurs in more negatives than positives, so neither a single core word
//! nor the context alone identifies a positive.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::motif::Motif;
use crate::orchestrator::config::{ClassConfig, ExperimentConfig, LabelerMode};
use crate::strategies::Strategy;
use crate::{rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub positive_rate: f64,
    pub n_families: usize,
    pub seeded_families: usize,
    /// Share of positives that belong to seeded families.
    pub seeded_share: f64,
    pub filler_vocab: usize,
    pub context: (String, String),
    /// Negatives carrying the adjacent context bigram, per positive.
    pub context_negatives_per_positive: f64,
    /// Per-document probability of each context word appearing alone.
    pub context_word_rate: (f64, f64),
    /// Decoys per corpus holding one core word of a seeded family.
    pub seeded_decoys: usize,
    pub other_decoys: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 1_000_000,
            positive_rate: 1e-3,
            n_families: 12,
            seeded_families: 4,
            seeded_share: 0.08,
            filler_vocab: 5000,
            context: ("my".into(), "job".into()),
            context_negatives_per_positive: 3.0,
            context_word_rate: (0.05, 0.03),
            seeded_decoys: 600,
            other_decoys: 60,
            min_len: 5,
            max_len: 8,
            seed: 20_240_611,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub core: (String, String),
    pub seeded: bool,
    pub size: usize,
}

impl Family {
    /// The ordered pair that defines the family.
    pub fn motif(&self) -> Motif {
        Motif::Ordered(vec![self.core.0.clone(), self.core.1.clone()])
    }

    /// Whether a gram contains both core words in order.
    pub fn is_characteristic(&self, gram: &[String]) -> bool {
        let a = gram.iter().position(|t| *t == self.core.0);
        let b = gram.iter().position(|t| *t == self.core.1);
        matches!((a, b), (Some(a), Some(b)) if a < b)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<(String, String)>,
    pub families: Vec<Family>,
    pub positives: usize,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr",
    "pl", "st", "tr", "sh",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn pseudo_word(r: &mut rng::Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = r.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS[r.random_range(0..ONSETS.len())],
                    VOWELS[r.random_range(0..VOWELS.len())]
                )
            })
            .collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

struct Filler {
    words: Vec<String>,
    dist: WeightedIndex<f64>,
}

impl Filler {
    fn draw(&self, r: &mut rng::Rng) -> &str {
        &self.words[self.dist.sample(r)]
    }
}

impl SyntheticCorpus {
    pub fn generate(cfg: &SyntheticConfig) -> Self {
        let mut r = rng::seeded(cfg.seed);
        let mut taken: HashSet<String> =
            [cfg.context.0.clone(), cfg.context.1.clone()].into_iter().collect();
        let words: Vec<String> = (0..cfg.filler_vocab).map(|_| pseudo_word(&mut r, &mut taken)).collect();
        let weights: Vec<f64> = (1..=words.len()).map(|k| 1.0 / k as f64).collect();
        let filler = Filler {
            words,
            dist: WeightedIndex::new(weights).expect("non-empty filler vocabulary"),
        };

        let n_pos = (cfg.n_docs as f64 * cfg.positive_rate).round() as usize;
        let n_seeded_pos = (n_pos as f64 * cfg.seeded_share).round() as usize;
        let families: Vec<Family> = (0..cfg.n_families)
            .map(|f| {
                let seeded = f < cfg.seeded_families;
                let (pool, k, i) = if seeded {
                    (n_seeded_pos, cfg.seeded_families, f)
                } else {
                    (n_pos - n_seeded_pos, cfg.n_families - cfg.seeded_families, f - cfg.seeded_families)
                };
                // spread the remainder over the first families of the group
                let size = pool / k + usize::from(i < pool % k);
                Family {
                    core: (pseudo_word(&mut r, &mut taken), pseudo_word(&mut r, &mut taken)),
                    seeded,
                    size,
                }
            })
            .collect();

        let mut docs: Vec<Vec<String>> = Vec::with_capacity(cfg.n_docs);
        let (c0, c1) = (&cfg.context.0, &cfg.context.1);
        let len = |r: &mut rng::Rng| r.random_range(cfg.min_len..=cfg.max_len);
        let fill = |r: &mut rng::Rng, n: usize| -> Vec<String> {
            (0..n).map(|_| filler.draw(r).to_string()).collect()
        };

        // positives: core0 .. context bigram .. core1, fillers in between
        for fam in &families {
            for _ in 0..fam.size {
                let l = len(&mut r).max(4);
                let mut gaps: [Vec<String>; 4] = Default::default();
                for w in fill(&mut r, l - 4) {
                    gaps[r.random_range(0..4)].push(w);
                }
                let [g0, g1, g2, g3] = gaps;
                let mut d = g0;
                d.push(fam.core.0.clone());
                d.extend(g1);
                d.extend([c0.clone(), c1.clone()]);
                d.extend(g2);
                d.push(fam.core.1.clone());
                d.extend(g3);
                docs.push(d);
            }
        }

        let context_negs = (n_pos as f64 * cfg.context_negatives_per_positive).round() as usize;
        for _ in 0..context_negs {
            let l = len(&mut r);
            let mut d = fill(&mut r, l - 2);
            let at = r.random_range(0..=d.len());
            d.splice(at..at, [c0.clone(), c1.clone()]);
            docs.push(d);
        }
        for fam in &families {
            let n = if fam.seeded { cfg.seeded_decoys } else { cfg.other_decoys };
            for core in [&fam.core.0, &fam.core.1] {
                for _ in 0..n {
                    let l = len(&mut r);
                    let mut d = fill(&mut r, l - 1);
                    let at = r.random_range(0..=d.len());
                    d.insert(at, core.clone());
                    docs.push(d);
                }
            }
        }
        let plain = cfg.n_docs.saturating_sub(docs.len());
        for _ in 0..plain {
            let l = len(&mut r);
            docs.push(fill(&mut r, l));
        }
        // context words on their own, anywhere but next to each other
        for d in docs.iter_mut().skip(n_pos + context_negs) {
            if r.random_bool(cfg.context_word_rate.0) {
                d.insert(r.random_range(0..=d.len()), c0.clone());
            }
            if r.random_bool(cfg.context_word_rate.1) {
                let at = r.random_range(0..=d.len());
                if at > 0 && d[at - 1] == *c0 {
                    d.insert(at - 1, c1.clone());
                } else {
                    d.insert(at, c1.clone());
                }
            }
        }

        docs.shuffle(&mut r);
        let width = (cfg.n_docs.max(1) - 1).to_string().len();
        let records = docs
            .into_iter()
            .enumerate()
            .map(|(i, d)| (format!("s{i:0width$}"), d.join(" ")))
            .collect();
        SyntheticCorpus {
            records,
            families,
            positives: n_pos,
        }
    }

    /// Oracle rules: a document is positive when any family motif matches.
    pub fn oracle_rules(&self) -> Vec<Motif> {
        self.families.iter().map(Family::motif).collect()
    }

    /// One seed per seeded family: its first core word alone.
    pub fn seeds(&self) -> Vec<Motif> {
        self.families
            .iter()
            .filter(|f| f.seeded)
            .map(|f| Motif::Phrase(vec![f.core.0.clone()]))
            .collect()
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_records(self.records.iter().cloned())
    }

    /// One-class oracle experiment over this corpus: seeds are the seeded
    /// families' first core words, the oracle is the family motifs.
    pub fn experiment_config(&self, corpus_path: impl Into<PathBuf>, strategy: Strategy) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(corpus_path);
        cfg.strategy = strategy;
        cfg.labeler = LabelerMode::Oracle;
        cfg.classes = vec![ClassConfig {
            name: "planted".into(),
            question: "Is this a planted positive?".into(),
            seeds: self.seeds().iter().map(ToString::to_string).collect(),
            oracle: self.oracle_rules().iter().map(ToString::to_string).collect(),
        }];
        cfg
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, text) in &self.records {
            serde_json::to_writer(&mut w, &serde_json::json!({ "id": id, "text": text }))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_docs: 20_000,
            positive_rate: 5e-3,
            seeded_decoys: 30,
            other_decoys: 5,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn planted_positives_match_oracle_exactly() {
        let s = SyntheticCorpus::generate(&small());
        assert_eq!(s.records.len(), 20_000);
        let rules = s.oracle_rules();
        let pos = s
            .records
            .iter()
            .filter(|(_, t)| rules.iter().any(|m| m.matches_text(t)))
            .count();
        assert_eq!(pos, s.positives);
        assert_eq!(s.families.iter().map(|f| f.size).sum::<usize>(), s.positives);
        for (_, t) in &s.records {
            let n = t.split(' ').count();
            assert!((5..=10).contains(&n), "{t}");
        }
    }

    #[test]
    fn deterministic() {
        let a = SyntheticCorpus::generate(&small());
        let b = SyntheticCorpus::generate(&small());
        assert_eq!(a.records, b.records);
        assert_eq!(a.families, b.families);
    }

    #[test]
    fn characteristic_grams() {
        let f = Family {
            core: ("ka".into(), "lo".into()),
            seeded: false,
            size: 1,
        };
        let g = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(f.is_characteristic(&g(&["ka", "lo"])));
        assert!(f.is_characteristic(&g(&["ka", "job", "lo"])));
        assert!(!f.is_characteristic(&g(&["lo", "ka"])));
        assert!(!f.is_characteristic(&g(&["ka", "job"])));
    }
}
