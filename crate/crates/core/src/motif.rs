//! Seed motifs: representation, matching, specificity/frequency estimation,
//! the seed retention rule and base-rate estimation.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, DocIdx, InvertedIndex, MatchQuery, Pool, TokenId, Vocab};
use crate::{Error, Result};

/// A seed pattern.
///
/// Matching is token-level: `job` does not match `jobless`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tokens", rename_all = "snake_case")]
pub enum Motif {
    /// Contiguous token sequence.
    Phrase(Vec<String>),
    /// Tokens in this order, with any number of tokens in between.
    Ordered(Vec<String>),
    /// Matches when any variant matches.
    Alternation(Vec<Motif>),
}

impl Motif {
    /// Literal phrase, tokenized with the corpus tokenizer.
    pub fn phrase(text: &str) -> Self {
        Motif::Phrase(tokenize(text))
    }

    /// Ordered gram. Each element is tokenized and the results concatenated.
    pub fn ordered<S: AsRef<str>>(words: &[S]) -> Self {
        Motif::Ordered(words.iter().flat_map(|w| tokenize(w.as_ref())).collect())
    }

    /// Parse the display notation used in seed tables:
    ///
    /// - `(a, b, c)`: ordered gram
    /// - `a b c`: literal phrase
    /// - `x/y/z`: alternatives for one word
    /// - `stem[a/b]`: alternative infixes inside one word
    ///
    /// Patterns with alternatives become an [`Motif::Alternation`] of every
    /// combination.
    pub fn parse(pattern: &str) -> Result<Self> {
        let p = pattern.trim();
        let (ordered, words): (bool, Vec<&str>) =
            if let Some(inner) = p.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
                (true, inner.split(',').map(str::trim).collect())
            } else {
                (false, p.split_whitespace().collect())
            };
        let options: Vec<Vec<String>> = words
            .iter()
            .filter(|w| !w.trim_matches('/').is_empty())
            .map(|w| expand_word(w))
            .collect();
        if options.is_empty() || options.iter().any(|o| o.is_empty()) {
            return Err(Error::InvalidArgument(format!("empty motif pattern {pattern:?}")));
        }
        let mut combos: Vec<Vec<String>> = vec![Vec::new()];
        for opts in &options {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    opts.iter().map(move |o| {
                        let mut c = prefix.clone();
                        c.push(o.clone());
                        c
                    })
                })
                .collect();
        }
        let mut variants: Vec<Motif> = combos
            .into_iter()
            .map(|words| {
                if ordered {
                    Motif::ordered(&words)
                } else {
                    Motif::phrase(&words.join(" "))
                }
            })
            .collect();
        let motif = if variants.len() == 1 {
            variants.pop().unwrap()
        } else {
            Motif::Alternation(variants)
        };
        motif.validate()?;
        Ok(motif)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Motif::Phrase(t) | Motif::Ordered(t) => {
                if t.is_empty() || t.iter().any(|s| s.is_empty()) {
                    return Err(Error::InvalidArgument(format!("motif {self} has no tokens")));
                }
                Ok(())
            }
            Motif::Alternation(vs) => {
                if vs.is_empty() {
                    return Err(Error::InvalidArgument("empty alternation".into()));
                }
                vs.iter().try_for_each(Motif::validate)
            }
        }
    }

    /// Match against a token sequence given as strings.
    pub fn matches_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        match self {
            Motif::Phrase(p) => {
                p.len() <= tokens.len()
                    && tokens
                        .windows(p.len())
                        .any(|w| w.iter().zip(p).all(|(a, b)| a.as_ref() == b))
            }
            Motif::Ordered(g) => {
                let mut it = tokens.iter();
                g.iter().all(|want| it.any(|t| t.as_ref() == want))
            }
            Motif::Alternation(vs) => vs.iter().any(|v| v.matches_tokens(tokens)),
        }
    }

    /// Match against raw text.
    pub fn matches_text(&self, text: &str) -> bool {
        self.matches_tokens(&tokenize(text))
    }

    /// Resolve tokens against a corpus vocabulary for fast matching.
    pub fn compile(&self, vocab: &Vocab) -> CompiledMotif {
        let mut variants = Vec::new();
        self.collect_variants(vocab, &mut variants);
        CompiledMotif {
            variants,
            display: self.to_string(),
        }
    }

    fn collect_variants(&self, vocab: &Vocab, out: &mut Vec<Variant>) {
        let resolve = |ts: &[String]| -> Option<Vec<TokenId>> {
            ts.iter().map(|t| vocab.get(t)).collect()
        };
        match self {
            Motif::Phrase(t) => out.push(Variant {
                contiguous: true,
                tokens: resolve(t),
            }),
            Motif::Ordered(t) => out.push(Variant {
                contiguous: false,
                tokens: resolve(t),
            }),
            Motif::Alternation(vs) => vs.iter().for_each(|v| v.collect_variants(vocab, out)),
        }
    }
}

fn expand_word(word: &str) -> Vec<String> {
    if let (Some(open), Some(close)) = (word.find('['), word.find(']')) {
        if open < close {
            let prefix = &word[..open];
            let suffix = &word[close + 1..];
            return word[open + 1..close]
                .split('/')
                .flat_map(|opt| expand_word(&format!("{prefix}{opt}{suffix}")))
                .collect();
        }
    }
    word.split('/')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl fmt::Display for Motif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Motif::Phrase(t) => write!(f, "{}", t.join(" ")),
            Motif::Ordered(t) => write!(f, "({})", t.join(", ")),
            Motif::Alternation(vs) => {
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Variant {
    contiguous: bool,
    /// `None` when a token is missing from the vocabulary: never matches.
    tokens: Option<Vec<TokenId>>,
}

impl Variant {
    fn matches(&self, doc: &[TokenId]) -> bool {
        let Some(p) = &self.tokens else { return false };
        if self.contiguous {
            p.len() <= doc.len() && doc.windows(p.len()).any(|w| w == p.as_slice())
        } else {
            let mut it = doc.iter();
            p.iter().all(|want| it.any(|t| t == want))
        }
    }
}

/// A motif resolved against one corpus vocabulary.
#[derive(Debug, Clone)]
pub struct CompiledMotif {
    variants: Vec<Variant>,
    display: String,
}

impl CompiledMotif {
    pub fn matches(&self, doc: &[TokenId]) -> bool {
        self.variants.iter().any(|v| v.matches(doc))
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    /// Sorted documents containing every token of at least one variant: a
    /// superset of the matches.
    pub fn candidates(&self, index: &InvertedIndex) -> Vec<DocIdx> {
        let mut out: Vec<DocIdx> = Vec::new();
        for v in &self.variants {
            let Some(tokens) = &v.tokens else { continue };
            let mut lists: Vec<&[DocIdx]> = tokens.iter().map(|&t| index.posting(t)).collect();
            lists.sort_by_key(|l| l.len());
            let Some((first, rest)) = lists.split_first() else { continue };
            out.extend(
                first
                    .iter()
                    .filter(|d| rest.iter().all(|l| l.binary_search(d).is_ok())),
            );
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Specificity and frequency of a motif.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifStats {
    /// Share of positives among sampled matching documents; `None` when no
    /// document matches.
    pub specificity: Option<f64>,
    /// Share of pool documents matching the motif.
    pub frequency: f64,
    /// Number of matching documents actually labeled for specificity.
    pub sample_n: usize,
}

impl MotifStats {
    pub fn new(specificity: f64, frequency: f64) -> Self {
        MotifStats {
            specificity: Some(specificity),
            frequency,
            sample_n: 0,
        }
    }
}

/// Estimate specificity on a seeded sample of `sample_n` matching documents
/// and frequency as the share of available pool documents that match.
pub fn estimate_stats<L>(
    motif: &Motif,
    pool: &Pool,
    label: L,
    sample_n: usize,
    seed: u64,
) -> Result<MotifStats>
where
    L: Fn(DocIdx) -> Option<bool>,
{
    let compiled = motif.compile(pool.corpus().vocab());
    let matching = pool.matching(MatchQuery::Motif(&compiled)).len();
    let total = pool.available_len();
    let frequency = if total == 0 {
        0.0
    } else {
        matching as f64 / total as f64
    };
    if matching == 0 {
        return Ok(MotifStats {
            specificity: None,
            frequency,
            sample_n: 0,
        });
    }
    let sample = pool.sample_matching(MatchQuery::Motif(&compiled), sample_n, seed);
    let mut positives = 0usize;
    for &d in &sample.docs {
        match label(d) {
            Some(true) => positives += 1,
            Some(false) => {}
            None => {
                return Err(Error::InvalidArgument(format!(
                    "no label for sampled document {}",
                    pool.corpus().doc(d).id
                )))
            }
        }
    }
    Ok(MotifStats {
        specificity: Some(positives as f64 / sample.docs.len() as f64),
        frequency,
        sample_n: sample.docs.len(),
    })
}

/// Retention thresholds for candidate seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRule {
    pub min_specificity: f64,
    pub min_product: f64,
}

impl Default for SeedRule {
    fn default() -> Self {
        SeedRule {
            min_specificity: 0.01,
            min_product: 1e-7,
        }
    }
}

impl SeedRule {
    /// Retain iff `S >= min_specificity` and `S * F > min_product`.
    pub fn retains(&self, stats: &MotifStats) -> bool {
        match stats.specificity {
            Some(s) => s >= self.min_specificity && s * stats.frequency > self.min_product,
            None => false,
        }
    }
}

/// Candidates passing the default rule, in input order.
pub fn select_seeds(candidates: &[(Motif, MotifStats)]) -> Vec<Motif> {
    let rule = SeedRule::default();
    candidates
        .iter()
        .filter(|(_, s)| rule.retains(s))
        .map(|(m, _)| m.clone())
        .collect()
}

/// Specificity-weighted sum of motif frequencies.
pub fn estimate_base_rate(motifs: &[(Motif, MotifStats)]) -> Result<f64> {
    if motifs.is_empty() {
        return Err(Error::Empty("motif list"));
    }
    Ok(motifs
        .iter()
        .map(|(_, s)| s.specificity.unwrap_or(0.0) * s.frequency)
        .sum())
}

/// One line of a seed file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub class: String,
    pub kind: SeedKind,
    pub pattern: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Literal,
    Ordered,
    Alternation,
}

/// A class seed after normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub class: String,
    pub motif: Motif,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<MotifStats>,
}

impl SeedRecord {
    pub fn to_seed(&self) -> Result<Seed> {
        let motif = pattern_to_motif(self.kind, &self.pattern)?;
        let stats = match (self.specificity, self.frequency) {
            (Some(s), Some(f)) => Some(MotifStats::new(s, f)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "seed {motif}: specificity and frequency must be given together"
                )))
            }
        };
        Ok(Seed {
            class: self.class.clone(),
            motif,
            stats,
        })
    }
}

fn pattern_to_motif(kind: SeedKind, pattern: &serde_json::Value) -> Result<Motif> {
    use serde_json::Value;
    let bad = || Error::InvalidArgument(format!("invalid {kind:?} pattern {pattern}"));
    match (kind, pattern) {
        (SeedKind::Literal, Value::String(s)) => Motif::parse(s),
        (SeedKind::Ordered, Value::Array(items)) => {
            let words: Vec<String> = items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(bad))
                .collect::<Result<_>>()?;
            Motif::parse(&format!("({})", words.join(", ")))
        }
        (SeedKind::Ordered, Value::String(s)) => Motif::parse(s),
        (SeedKind::Alternation, Value::Array(items)) => {
            let variants = items
                .iter()
                .map(|v| match v {
                    Value::String(_) => pattern_to_motif(SeedKind::Literal, v),
                    Value::Array(_) => pattern_to_motif(SeedKind::Ordered, v),
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<_>>>()?;
            let m = Motif::Alternation(variants);
            m.validate()?;
            Ok(m)
        }
        _ => Err(bad()),
    }
}

/// Read a JSON-lines seed file.
pub fn read_seed_file(path: &Path) -> Result<Vec<Seed>> {
    let file = std::fs::File::open(path)?;
    let mut seeds = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SeedRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        seeds.push(rec.to_seed().map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(seeds)
}

/// Write the `motif,S,F,retained` report.
pub fn write_stats_csv<W: Write>(mut w: W, rows: &[(Motif, MotifStats)]) -> Result<()> {
    let rule = SeedRule::default();
    writeln!(w, "motif,S,F,retained")?;
    for (m, s) in rows {
        let spec = s.specificity.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{}",
            csv_field(&m.to_string()),
            spec,
            s.frequency,
            rule.retains(s)
        )?;
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
