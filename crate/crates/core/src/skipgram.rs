//! k-skip-n-gram enumeration, document-frequency indexing and lift mining.
//!
//! A k-skip-n-gram of a token sequence is any ordered choice of `n` of its
//! tokens; the gaps between chosen tokens are unbounded.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocIdx, Pool, TokenId, Vocab};
use crate::motif::csv_field;
use crate::{par, Error, Result};

/// Every ordered combination of `n` tokens, as a set.
pub fn enumerate_skipgrams<T: Ord + Clone>(tokens: &[T], n: usize) -> BTreeSet<Vec<T>> {
    let mut out = BTreeSet::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let len = tokens.len();
    loop {
        out.insert(idx.iter().map(|&i| tokens[i].clone()).collect());
        // advance to the next combination in lexicographic index order
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < len - n + pos {
                idx[pos] += 1;
                for j in pos + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

/// An ordered tuple of tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkipGram(pub Vec<String>);

impl SkipGram {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        SkipGram(tokens.iter().map(|s| s.as_ref().to_string()).collect())
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn shares_token(&self, other: &SkipGram) -> bool {
        self.0.iter().any(|t| other.0.contains(t))
    }

    pub fn to_motif(&self) -> crate::motif::Motif {
        crate::motif::Motif::Ordered(self.0.clone())
    }
}

impl fmt::Display for SkipGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("|"))
    }
}

/// Which tokens may appear in indexed grams.
#[derive(Debug, Clone, Default)]
pub struct VocabFilter {
    allow: Option<HashSet<String>>,
}

impl VocabFilter {
    /// Lowercase alphabetic tokens and apostrophes only.
    pub fn default_rule(token: &str) -> bool {
        !token.is_empty()
            && token
                .chars()
                .all(|c| (c.is_alphabetic() && !c.is_uppercase()) || c == '\'')
            && token.chars().any(char::is_alphabetic)
    }

    /// Restrict further to the tokens listed one per line in `path`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::with_allow_list(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }

    pub fn with_allow_list<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Self {
        VocabFilter {
            allow: Some(tokens.into_iter().map(str::to_string).collect()),
        }
    }

    pub fn accepts(&self, token: &str) -> bool {
        Self::default_rule(token) && self.allow.as_ref().is_none_or(|a| a.contains(token))
    }

    fn describe(&self) -> String {
        match &self.allow {
            None => "lowercase-alphabetic".into(),
            Some(a) => format!("lowercase-alphabetic+allow-list({})", a.len()),
        }
    }
}

/// Filters applied when building an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub vocab: String,
    pub min_freq: f64,
    pub min_count: u32,
    pub drop_repetitions: bool,
}

const ID_BITS: u32 = 21;
const ID_MASK: u64 = (1 << ID_BITS) - 1;
const GRAM_SHARD: usize = 4096;

/// Document frequency of every gram of one order that survives the
/// vocabulary, repetition and frequency filters.
#[derive(Debug, Clone)]
pub struct GramIndex {
    n: usize,
    keys: Vec<u64>,
    counts: Vec<u32>,
    corpus_size: usize,
    /// Dense local id to corpus token, for tokens that can appear in a gram.
    tokens: Vec<TokenId>,
    local: HashMap<TokenId, u32>,
    filters: FilterRecord,
}

fn pack(ids: &[u32]) -> u64 {
    ids.iter().fold(0u64, |acc, &i| (acc << ID_BITS) | i as u64)
}

fn unpack(key: u64, n: usize) -> Vec<u32> {
    (0..n)
        .rev()
        .map(|k| ((key >> (k as u32 * ID_BITS)) & ID_MASK) as u32)
        .collect()
}

/// Packed keys of the distinct repetition-free grams of a local-id sequence.
fn doc_keys(seq: &[u32], n: usize, out: &mut Vec<u64>) {
    let start = out.len();
    let len = seq.len();
    match n {
        2 => {
            for i in 0..len {
                for j in i + 1..len {
                    if seq[i] != seq[j] {
                        out.push(pack(&[seq[i], seq[j]]));
                    }
                }
            }
        }
        3 => {
            for i in 0..len {
                for j in i + 1..len {
                    if seq[i] == seq[j] {
                        continue;
                    }
                    for k in j + 1..len {
                        if seq[k] != seq[i] && seq[k] != seq[j] {
                            out.push(pack(&[seq[i], seq[j], seq[k]]));
                        }
                    }
                }
            }
        }
        _ => unreachable!("gram order checked by caller"),
    }
    out[start..].sort_unstable();
    let mut w = start;
    for r in start..out.len() {
        if w == start || out[r] != out[w - 1] {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
}

/// Sort keys and collapse runs into `(key, count)`.
fn run_lengths(mut keys: Vec<u64>) -> (Vec<u64>, Vec<u32>) {
    par::sort_unstable(&mut keys);
    let mut out_k = Vec::new();
    let mut out_c: Vec<u32> = Vec::new();
    for k in keys {
        if out_k.last() == Some(&k) {
            *out_c.last_mut().unwrap() += 1;
        } else {
            out_k.push(k);
            out_c.push(1);
        }
    }
    (out_k, out_c)
}

impl GramIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn filters(&self) -> &FilterRecord {
        &self.filters
    }

    fn local_seq(&self, tokens: &[TokenId], out: &mut Vec<u32>) {
        out.clear();
        out.extend(tokens.iter().filter_map(|t| self.local.get(t).copied()));
    }

    fn gram_of(&self, key: u64, vocab: &Vocab) -> SkipGram {
        SkipGram(
            unpack(key, self.n)
                .into_iter()
                .map(|l| vocab.resolve(self.tokens[l as usize]).to_string())
                .collect(),
        )
    }

    fn key_of(&self, gram: &SkipGram, vocab: &Vocab) -> Option<u64> {
        if gram.n() != self.n {
            return None;
        }
        let ids: Option<Vec<u32>> = gram
            .0
            .iter()
            .map(|t| vocab.get(t).and_then(|id| self.local.get(&id).copied()))
            .collect();
        ids.map(|ids| pack(&ids))
    }

    /// Document count of a gram, 0 when it is not indexed.
    pub fn count(&self, gram: &SkipGram, vocab: &Vocab) -> u32 {
        self.key_of(gram, vocab)
            .and_then(|k| self.keys.binary_search(&k).ok())
            .map_or(0, |i| self.counts[i])
    }

    /// All `(gram, count)` pairs sorted by gram.
    pub fn entries(&self, vocab: &Vocab) -> Vec<(SkipGram, u32)> {
        let mut out: Vec<(SkipGram, u32)> = self
            .keys
            .iter()
            .zip(&self.counts)
            .map(|(&k, &c)| (self.gram_of(k, vocab), c))
            .collect();
        out.sort();
        out
    }

    /// Write `token1|token2[|token3],count` lines sorted by gram.
    pub fn write_csv<W: Write>(&self, mut w: W, vocab: &Vocab) -> Result<()> {
        for (g, c) in self.entries(vocab) {
            writeln!(w, "{},{}", csv_field(&g.to_string()), c)?;
        }
        Ok(())
    }
}

/// Count, for every gram of order `n`, the number of available pool
/// documents containing it, keeping grams whose tokens all pass `vocab`,
/// that repeat no token, and whose document frequency is at least
/// `min_freq`.
pub fn build_gram_index(
    pool: &Pool,
    n: usize,
    vocab: &VocabFilter,
    min_freq: f64,
) -> Result<GramIndex> {
    if n != 2 && n != 3 {
        return Err(Error::InvalidArgument(format!("gram order must be 2 or 3, got {n}")));
    }
    let corpus = pool.corpus();
    let docs = pool.available();
    if docs.is_empty() {
        return Err(Error::Empty("pool"));
    }
    let size = docs.len();
    let passes = |c: u32| c as f64 / size as f64 >= min_freq;
    let mut min_count = ((min_freq * size as f64).ceil().max(1.0)) as u32;
    while min_count > 1 && passes(min_count - 1) {
        min_count -= 1;
    }
    while !passes(min_count) {
        min_count += 1;
    }

    let vocab_ok: Vec<bool> = {
        let strs: Vec<&str> = corpus.vocab().iter().map(|(_, s)| s).collect();
        par::map(&strs, |s| vocab.accepts(s))
    };

    // A gram is never more frequent than its rarest token.
    let shard_df = par::map_chunks(&docs, GRAM_SHARD, |chunk| {
        let mut df: HashMap<TokenId, u32> = HashMap::new();
        let mut seen = Vec::new();
        for &d in chunk {
            seen.clear();
            seen.extend(corpus.doc(d).tokens.iter().copied().filter(|t| vocab_ok[t.0 as usize]));
            seen.sort_unstable();
            seen.dedup();
            for &t in &seen {
                *df.entry(t).or_default() += 1;
            }
        }
        df
    });
    let mut df: HashMap<TokenId, u32> = HashMap::new();
    for shard in shard_df {
        for (t, c) in shard {
            *df.entry(t).or_default() += c;
        }
    }
    let mut tokens: Vec<TokenId> = df
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t)
        .collect();
    tokens.sort_unstable();
    if tokens.len() as u64 > ID_MASK {
        return Err(Error::InvalidArgument(format!(
            "{} candidate gram tokens exceed the packed-key limit of {}",
            tokens.len(),
            ID_MASK
        )));
    }
    let local: HashMap<TokenId, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i as u32))
        .collect();

    let shard_keys = par::map_chunks(&docs, GRAM_SHARD, |chunk| {
        let mut keys = Vec::new();
        let mut seq = Vec::new();
        for &d in chunk {
            seq.clear();
            seq.extend(
                corpus
                    .doc(d)
                    .tokens
                    .iter()
                    .filter_map(|t| local.get(t).copied()),
            );
            doc_keys(&seq, n, &mut keys);
        }
        keys
    });
    let all: Vec<u64> = shard_keys.concat();
    let (keys, counts) = run_lengths(all);
    let (keys, counts): (Vec<u64>, Vec<u32>) = keys
        .into_iter()
        .zip(counts)
        .filter(|&(_, c)| c >= min_count)
        .unzip();

    Ok(GramIndex {
        n,
        keys,
        counts,
        corpus_size: size,
        tokens,
        local,
        filters: FilterRecord {
            vocab: vocab.describe(),
            min_freq,
            min_count,
            drop_repetitions: true,
        },
    })
}

/// Frequency of a gram in a high-confidence subset relative to its
/// frequency in the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftEntry {
    pub gram: SkipGram,
    pub top_count: u32,
    pub pool_count: u32,
    pub top_freq: f64,
    pub pool_freq: f64,
    pub lift: f64,
}

/// Lift of every indexed gram. Only grams present in the top set are
/// stored; every other indexed gram has lift 0.
#[derive(Debug, Clone)]
pub struct LiftTable {
    pub n: usize,
    pub top_size: usize,
    pub entries: Vec<LiftEntry>,
    lookup: HashMap<SkipGram, usize>,
}

impl LiftTable {
    pub fn lift(&self, gram: &SkipGram) -> f64 {
        self.lookup.get(gram).map_or(0.0, |&i| self.entries[i].lift)
    }

    pub fn get(&self, gram: &SkipGram) -> Option<&LiftEntry> {
        self.lookup.get(gram).map(|&i| &self.entries[i])
    }

    /// Write the `gram,top_freq,pool_freq,lift` report in lift order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "gram,top_freq,pool_freq,lift")?;
        let mut rows: Vec<&LiftEntry> = self.entries.iter().collect();
        rows.sort_by(|a, b| b.lift.total_cmp(&a.lift).then_with(|| a.gram.cmp(&b.gram)));
        for e in rows {
            writeln!(
                w,
                "{},{},{},{}",
                csv_field(&e.gram.to_string()),
                e.top_freq,
                e.pool_freq,
                e.lift
            )?;
        }
        Ok(())
    }
}

/// Lift of each indexed gram over the documents in `top`.
pub fn compute_lift(top: &[DocIdx], pool: &Pool, index: &GramIndex) -> Result<LiftTable> {
    if top.is_empty() {
        return Err(Error::Empty("top set"));
    }
    if let Some(&d) = top.iter().find(|&&d| !pool.contains(d)) {
        return Err(Error::InvalidArgument(format!(
            "top document {} is not in the pool",
            pool.corpus().doc(d).id
        )));
    }
    let mut top: Vec<DocIdx> = top.to_vec();
    top.sort_unstable();
    top.dedup();
    let corpus = pool.corpus();
    let n = index.n;
    let shard_keys = par::map_chunks(&top, GRAM_SHARD, |chunk| {
        let mut keys = Vec::new();
        let mut seq = Vec::new();
        for &d in chunk {
            index.local_seq(&corpus.doc(d).tokens, &mut seq);
            doc_keys(&seq, n, &mut keys);
        }
        keys.retain(|k| index.keys.binary_search(k).is_ok());
        keys
    });
    let (keys, counts) = run_lengths(shard_keys.concat());
    let top_size = top.len();
    let entries: Vec<LiftEntry> = keys
        .iter()
        .zip(&counts)
        .map(|(&k, &c)| {
            let pool_count = index.counts[index.keys.binary_search(&k).unwrap()];
            let top_freq = c as f64 / top_size as f64;
            let pool_freq = pool_count as f64 / index.corpus_size as f64;
            LiftEntry {
                gram: index.gram_of(k, corpus.vocab()),
                top_count: c,
                pool_count,
                top_freq,
                pool_freq,
                lift: top_freq / pool_freq,
            }
        })
        .collect();
    let lookup = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.gram.clone(), i))
        .collect();
    Ok(LiftTable {
        n,
        top_size,
        entries,
        lookup,
    })
}

/// Selected grams for one order.
#[derive(Debug, Clone, PartialEq)]
pub struct TopLift {
    pub selected: Vec<LiftEntry>,
    /// Fewer than `k` grams survived the filters.
    pub shortfall: bool,
}

/// Pick up to `k` grams per order by descending lift (ties broken by token
/// order), skipping grams in `used_previous` and any gram sharing a token
/// with a higher-lift gram of the same order already kept.
pub fn select_top_lift(
    entries: &[LiftEntry],
    used_previous: &HashSet<SkipGram>,
    k: usize,
) -> TopLift {
    let mut ranked: Vec<&LiftEntry> = entries
        .iter()
        .filter(|e| e.lift > 0.0 && !used_previous.contains(&e.gram))
        .collect();
    ranked.sort_by(|a, b| {
        a.gram
            .n()
            .cmp(&b.gram.n())
            .then_with(|| b.lift.total_cmp(&a.lift))
            .then_with(|| a.gram.cmp(&b.gram))
    });
    let mut selected: Vec<LiftEntry> = Vec::new();
    let mut per_n: HashMap<usize, usize> = HashMap::new();
    let mut used_tokens: HashMap<usize, HashSet<&str>> = HashMap::new();
    for e in ranked {
        let n = e.gram.n();
        let taken = per_n.entry(n).or_default();
        if *taken >= k {
            continue;
        }
        let toks = used_tokens.entry(n).or_default();
        if e.gram.0.iter().any(|t| toks.contains(t.as_str())) {
            continue;
        }
        toks.extend(e.gram.0.iter().map(String::as_str));
        *taken += 1;
        selected.push(e.clone());
    }
    let orders: BTreeSet<usize> = entries.iter().map(|e| e.gram.n()).collect();
    let shortfall = orders.is_empty() || orders.iter().any(|n| per_n.get(n).copied().unwrap_or(0) < k);
    TopLift {
        selected,
        shortfall,
    }
}
