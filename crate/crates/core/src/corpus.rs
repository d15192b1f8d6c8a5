//! Corpus ingestion, tokenization, indexing and the evaluation/sampling pools.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::motif::CompiledMotif;
use crate::{par, rng, Error, Result};

/// Interned token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u32);

/// Position of a document in its [`Corpus`]. Documents are stored sorted by
/// id, so ordering `DocIdx` values is the same as ordering document ids.
pub type DocIdx = u32;

/// Split text into lowercase tokens.
///
/// Whitespace separates tokens. Inside a whitespace-delimited chunk, runs of
/// word characters (letters, digits, `_`, and apostrophes between two
/// alphanumerics) form one token and runs of other characters form another.
/// `#tag` and `@user` stay whole, and anything from `http://` or `https://`
/// to the end of the chunk is one URL token.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lower.split_whitespace() {
        tokenize_chunk(chunk, &mut out);
    }
    out
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut i = 0;
    let mut punct_start: Option<usize> = None;
    let flush = |start: &mut Option<usize>, end: usize, out: &mut Vec<String>| {
        if let Some(s) = start.take() {
            out.push(chunk[s..end].to_string());
        }
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        let rest = &chunk[pos..];
        if rest.starts_with("http://") || rest.starts_with("https://") {
            flush(&mut punct_start, pos, out);
            out.push(rest.to_string());
            return;
        }
        if (c == '#' || c == '@') && chars.get(i + 1).is_some_and(|&(_, n)| is_word(n)) {
            flush(&mut punct_start, pos, out);
            let mut j = i + 1;
            while j < chars.len() && is_word(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(chunk.len(), |&(p, _)| p);
            out.push(chunk[pos..end].to_string());
            i = j;
            continue;
        }
        if is_word(c) {
            flush(&mut punct_start, pos, out);
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word(cj) {
                    j += 1;
                } else if cj == '\''
                    && chars[j - 1].1.is_alphanumeric()
                    && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphanumeric())
                {
                    j += 1;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(chunk.len(), |&(p, _)| p);
            out.push(chunk[pos..end].to_string());
            i = j;
            continue;
        }
        if punct_start.is_none() {
            punct_start = Some(pos);
        }
        i += 1;
    }
    flush(&mut punct_start, chunk.len(), out);
}

/// Token interner.
#[derive(Debug, Default, Clone)]
pub struct Vocab {
    ids: HashMap<String, TokenId>,
    strings: Vec<String>,
}

impl Vocab {
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = TokenId(self.strings.len() as u32);
        self.strings.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn resolve(&self, id: TokenId) -> &str {
        &self.strings[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.strings
            .iter()
            .enumerate()
            .map(|(i, s)| (TokenId(i as u32), s.as_str()))
    }
}

/// One corpus item. `tokens` is a deterministic function of `text`, stored
/// interned against the owning corpus' [`Vocab`].
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub tokens: Box<[TokenId]>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
}

/// An immutable, id-sorted document collection.
#[derive(Debug)]
pub struct Corpus {
    docs: Vec<Document>,
    vocab: Vocab,
    by_id: HashMap<String, DocIdx>,
}

impl Corpus {
    /// Build a corpus from `(id, text)` pairs. Duplicate ids are rejected.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut records: Vec<(String, String)> = records.into_iter().collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = records.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!(
                "duplicate document id {:?}",
                w[0].0
            )));
        }
        Ok(Self::build(records))
    }

    fn build(records: Vec<(String, String)>) -> Self {
        let tokenized = par::map(&records, |(_, text)| tokenize(text));
        let mut vocab = Vocab::default();
        let mut docs = Vec::with_capacity(records.len());
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, ((id, text), toks)) in records.into_iter().zip(tokenized).enumerate() {
            let tokens: Box<[TokenId]> = toks.iter().map(|t| vocab.intern(t)).collect();
            by_id.insert(id.clone(), i as DocIdx);
            docs.push(Document { id, text, tokens });
        }
        Corpus { docs, vocab, by_id }
    }

    /// Load a JSON-lines corpus, one `{"id": ..., "text": ...}` object per
    /// line. Gzip input is detected from its magic bytes.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path)?;
        let mut magic = [0u8; 2];
        let n = file.read(&mut magic)?;
        drop(file);
        let file = File::open(path)?;
        let reader: Box<dyn BufRead> = if n == 2 && magic == [0x1f, 0x8b] {
            Box::new(BufReader::new(GzDecoder::new(file)))
        } else {
            Box::new(BufReader::new(file))
        };
        Self::read_jsonl(reader, path)
    }

    pub fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RawRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            if seen.insert(rec.id.clone(), line_no).is_some() {
                return Err(Error::DuplicateId {
                    path: path.to_path_buf(),
                    line: line_no,
                    id: rec.id,
                });
            }
            records.push((rec.id, rec.text));
        }
        records.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self::build(records))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, idx: DocIdx) -> &Document {
        &self.docs[idx as usize]
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn lookup(&self, id: &str) -> Option<DocIdx> {
        self.by_id.get(id).copied()
    }

    /// Token strings of a document.
    pub fn token_strs(&self, idx: DocIdx) -> Vec<&str> {
        self.doc(idx)
            .tokens
            .iter()
            .map(|&t| self.vocab.resolve(t))
            .collect()
    }

    /// Resolve ids, failing with the first ten unknown ones.
    pub fn resolve_ids<'a, I>(&self, ids: I) -> Result<Vec<DocIdx>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = Vec::new();
        let mut unknown = Vec::new();
        let mut count = 0;
        for id in ids {
            match self.lookup(id) {
                Some(i) => out.push(i),
                None => {
                    count += 1;
                    if unknown.len() < 10 {
                        unknown.push(id.to_string());
                    }
                }
            }
        }
        if count > 0 {
            return Err(Error::UnknownIds {
                count,
                first: unknown,
            });
        }
        Ok(out)
    }
}

/// Token to sorted posting list over the members of a pool.
#[derive(Debug, Default)]
pub struct InvertedIndex {
    postings: HashMap<TokenId, Vec<DocIdx>>,
}

const INDEX_SHARD: usize = 16_384;

impl InvertedIndex {
    /// Build from sorted members. Shards are merged in member order, so each
    /// posting list comes out sorted whatever the thread count.
    pub fn build(corpus: &Corpus, members: &[DocIdx]) -> Self {
        let shards = par::map_chunks(members, INDEX_SHARD, |chunk| {
            let mut local: HashMap<TokenId, Vec<DocIdx>> = HashMap::new();
            let mut seen: Vec<TokenId> = Vec::new();
            for &d in chunk {
                seen.clear();
                seen.extend_from_slice(&corpus.doc(d).tokens);
                seen.sort_unstable();
                seen.dedup();
                for &t in &seen {
                    local.entry(t).or_default().push(d);
                }
            }
            local
        });
        let mut postings: HashMap<TokenId, Vec<DocIdx>> = HashMap::new();
        for shard in shards {
            for (t, mut list) in shard {
                postings.entry(t).or_default().append(&mut list);
            }
        }
        InvertedIndex { postings }
    }

    pub fn posting(&self, token: TokenId) -> &[DocIdx] {
        self.postings.get(&token).map_or(&[], |v| v.as_slice())
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }
}

/// What a sampler should match.
#[derive(Debug, Clone, Copy)]
pub enum MatchQuery<'a> {
    Any,
    Motif(&'a CompiledMotif),
}

/// Documents drawn by a sampler. `shortfall` is set when fewer than the
/// requested number of documents were available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub docs: Vec<DocIdx>,
    pub shortfall: bool,
}

/// A view over part of a corpus with its own inverted index and a
/// cumulative exclusion set. Excluded documents stay in the index but are
/// never returned by samplers.
#[derive(Debug)]
pub struct Pool {
    corpus: Arc<Corpus>,
    members: Vec<DocIdx>,
    is_member: Vec<bool>,
    excluded: Vec<bool>,
    n_excluded: usize,
    index: InvertedIndex,
}

impl Pool {
    pub fn new(corpus: Arc<Corpus>, mut members: Vec<DocIdx>) -> Self {
        members.sort_unstable();
        members.dedup();
        let mut is_member = vec![false; corpus.len()];
        for &m in &members {
            is_member[m as usize] = true;
        }
        let index = InvertedIndex::build(&corpus, &members);
        let excluded = vec![false; corpus.len()];
        Pool {
            corpus,
            members,
            is_member,
            excluded,
            n_excluded: 0,
            index,
        }
    }

    /// Pool over the whole corpus.
    pub fn whole(corpus: Arc<Corpus>) -> Self {
        let members = (0..corpus.len() as DocIdx).collect();
        Self::new(corpus, members)
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    /// All members, excluded or not, sorted.
    pub fn members(&self) -> &[DocIdx] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, d: DocIdx) -> bool {
        self.is_member[d as usize]
    }

    pub fn is_excluded(&self, d: DocIdx) -> bool {
        self.excluded[d as usize]
    }

    pub fn is_available(&self, d: DocIdx) -> bool {
        self.is_member[d as usize] && !self.excluded[d as usize]
    }

    /// Number of members not excluded.
    pub fn available_len(&self) -> usize {
        self.members.len() - self.n_excluded
    }

    /// Members not excluded, sorted.
    pub fn available(&self) -> Vec<DocIdx> {
        par::filter(&self.members, |&d| !self.excluded[d as usize])
    }

    /// Exclude documents from all future samples. Ids outside the pool are
    /// ignored; exclusion is cumulative.
    pub fn exclude_ids<I: IntoIterator<Item = DocIdx>>(&mut self, ids: I) {
        for d in ids {
            let i = d as usize;
            if i < self.is_member.len() && self.is_member[i] && !self.excluded[i] {
                self.excluded[i] = true;
                self.n_excluded += 1;
            }
        }
    }

    pub fn excluded_ids(&self) -> Vec<DocIdx> {
        self.members
            .iter()
            .copied()
            .filter(|&d| self.excluded[d as usize])
            .collect()
    }

    /// Sorted available documents matching `query`.
    pub fn matching(&self, query: MatchQuery<'_>) -> Vec<DocIdx> {
        match query {
            MatchQuery::Any => self.available(),
            MatchQuery::Motif(motif) => {
                let candidates = motif.candidates(&self.index);
                par::filter(&candidates, |&d| {
                    !self.excluded[d as usize] && motif.matches(&self.corpus.doc(d).tokens)
                })
            }
        }
    }

    /// Uniform sample without replacement of up to `n` available documents
    /// matching `query`, by seeded shuffle of the id-sorted candidates.
    pub fn sample_matching(&self, query: MatchQuery<'_>, n: usize, seed: u64) -> Sample {
        let mut candidates = self.matching(query);
        let shortfall = candidates.len() < n;
        let take = n.min(candidates.len());
        let mut rng = rng::seeded(seed);
        let (picked, _) = candidates.partial_shuffle(&mut rng, take);
        Sample {
            docs: picked.to_vec(),
            shortfall,
        }
    }
}

/// The evaluation pool and the sampling pool. They never share a document.
#[derive(Debug)]
pub struct PoolPair {
    pub eval: Pool,
    pub sampling: Pool,
}

/// Randomly split a corpus into an evaluation pool of `round(ratio * N)`
/// documents and a sampling pool holding the rest.
pub fn split_corpus(corpus: Arc<Corpus>, ratio: f64, seed: u64) -> Result<PoolPair> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let n = corpus.len();
    let n_eval = (ratio * n as f64).round() as usize;
    let mut order: Vec<DocIdx> = (0..n as DocIdx).collect();
    order.shuffle(&mut rng::seeded(seed));
    let sampling = order.split_off(n_eval);
    let eval = order;
    Ok(PoolPair {
        eval: Pool::new(Arc::clone(&corpus), eval),
        sampling: Pool::new(corpus, sampling),
    })
}
