//! Evaluation on the evaluation pool: rank-schedule sampling, average
//! precision, the number of predicted positives, diversity of retrieved
//! positives, bootstrap standard errors and convergence.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Corpus, DocIdx, TokenId};
use crate::scorer::ScoreTable;
use crate::{par, rng, Error, Result};

/// Ordered, disjoint, 1-based inclusive rank intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct RankSchedule {
    intervals: Vec<(usize, usize)>,
}

impl RankSchedule {
    pub fn new(intervals: Vec<(usize, usize)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("empty rank schedule".into()));
        }
        for (i, &(lo, hi)) in intervals.iter().enumerate() {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidArgument(format!("bad rank interval {lo}-{hi}")));
            }
            if i > 0 && lo <= intervals[i - 1].1 {
                return Err(Error::InvalidArgument(format!(
                    "rank interval {lo}-{hi} overlaps or precedes the previous one"
                )));
            }
        }
        Ok(RankSchedule { intervals })
    }

    /// Ranks 1-20, then fifteen groups of ten log-spaced between 10^2 and
    /// 10^6 (170 ranks).
    pub fn standard() -> Self {
        let starts = [
            101, 317, 1001, 2155, 4642, 10001, 17783, 31623, 56235, 100001, 158490, 251189, 398108,
            630958, 1000001,
        ];
        let mut v = vec![(1, 20)];
        v.extend(starts.iter().map(|&s| (s, s + 9)));
        RankSchedule { intervals: v }
    }

    /// `top` leading ranks, then `width`-rank groups at `per_decade`
    /// log-spaced starts up to `max_rank`.
    pub fn geometric(top: usize, width: usize, per_decade: usize, max_rank: usize) -> Result<Self> {
        let mut v = vec![(1, top)];
        let mut k = 1usize;
        loop {
            let start = (top as f64 * 10f64.powf(k as f64 / per_decade as f64)).round() as usize + 1;
            let last = v.last().unwrap().1;
            k += 1;
            if start <= last {
                continue;
            }
            if start + width - 1 > max_rank {
                break;
            }
            v.push((start, start + width - 1));
        }
        Self::new(v)
    }

    pub fn intervals(&self) -> &[(usize, usize)] {
        &self.intervals
    }

    /// Ranks covered when nothing is truncated.
    pub fn total(&self) -> usize {
        self.intervals.iter().map(|(lo, hi)| hi - lo + 1).sum()
    }
}

impl TryFrom<Vec<(usize, usize)>> for RankSchedule {
    type Error = Error;
    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RankSchedule> for Vec<(usize, usize)> {
    fn from(s: RankSchedule) -> Self {
        s.intervals
    }
}

/// Documents in descending score order, ties by ascending document.
#[derive(Debug, Clone)]
pub struct Ranking {
    order: Vec<DocIdx>,
    rank: HashMap<DocIdx, u32>,
}

impl Ranking {
    pub fn new(scores: &ScoreTable) -> Self {
        let mut order: Vec<(DocIdx, f64)> = scores.entries().to_vec();
        par::sort_unstable_by(&mut order, |a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let order: Vec<DocIdx> = order.into_iter().map(|e| e.0).collect();
        let rank = order
            .iter()
            .enumerate()
            .map(|(i, &d)| (d, i as u32 + 1))
            .collect();
        Ranking { order, rank }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of a document.
    pub fn rank(&self, d: DocIdx) -> Option<u32> {
        self.rank.get(&d).copied()
    }

    pub fn order(&self) -> &[DocIdx] {
        &self.order
    }

    pub fn top(&self, k: usize) -> &[DocIdx] {
        &self.order[..k.min(self.order.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSample {
    /// `(document, rank)` in rank order.
    pub docs: Vec<(DocIdx, u32)>,
    /// Some intervals reached past the pool and were dropped.
    pub truncated: bool,
}

/// Documents at the scheduled ranks. Intervals whose upper end exceeds the
/// pool are dropped.
pub fn evaluation_sample(ranking: &Ranking, schedule: &RankSchedule) -> EvalSample {
    let n = ranking.len();
    let mut docs = Vec::new();
    let mut truncated = false;
    for &(lo, hi) in schedule.intervals() {
        if hi > n {
            truncated = true;
            continue;
        }
        for r in lo..=hi {
            docs.push((ranking.order[r - 1], r as u32));
        }
    }
    EvalSample { docs, truncated }
}

/// A labeled evaluation document at its current rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub rank: u64,
    pub label: bool,
}

fn sorted(items: &[RankedLabel]) -> Vec<RankedLabel> {
    let mut v = items.to_vec();
    v.sort_unstable_by_key(|i| (i.rank, !i.label));
    v
}

/// `(1/N) * sum over pooled ranks r of P(r) * pos(r)`, where `P(r)` is the
/// share of positives among pooled documents ranked at or above `r`.
pub fn average_precision(items: &[RankedLabel]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty("evaluation pool"));
    }
    let v = sorted(items);
    let mut sum = 0.0;
    let (mut seen, mut pos) = (0usize, 0usize);
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        let mut group_pos = 0;
        while j < v.len() && v[j].rank == v[i].rank {
            group_pos += v[j].label as usize;
            j += 1;
        }
        seen += j - i;
        pos += group_pos;
        sum += group_pos as f64 * (pos as f64 / seen as f64);
        i = j;
    }
    Ok(sum / v.len() as f64)
}

/// How the first sub-majority bin is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    /// Positive share `< 0.5`.
    #[default]
    Below,
    /// Positive share `<= 0.5`.
    AtOrBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedPositives {
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    /// No bin fell below one half; `upper` is the pool size.
    pub unbounded: bool,
}

/// Equal-size bin boundaries over `n` items. Sizes differ by at most one.
fn bin_bounds(n: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins).map(|b| (b * n / bins, (b + 1) * n / bins)).collect()
}

/// Estimate of the rank at which the share of positives drops below one
/// half, bracketed by the mean ranks of the bins on either side.
pub fn predicted_positives(
    items: &[RankedLabel],
    bins: usize,
    pool_size: usize,
    crossing: Crossing,
) -> Result<PredictedPositives> {
    if bins == 0 || items.len() < bins {
        return Err(Error::InvalidArgument(format!(
            "{} evaluation labels cannot fill {bins} bins",
            items.len()
        )));
    }
    let v = sorted(items);
    let stats: Vec<(f64, f64)> = bin_bounds(v.len(), bins)
        .into_iter()
        .map(|(a, b)| {
            let s = &v[a..b];
            let share = s.iter().filter(|i| i.label).count() as f64 / s.len() as f64;
            let mean = s.iter().map(|i| i.rank as f64).sum::<f64>() / s.len() as f64;
            (share, mean)
        })
        .collect();
    let below = |share: f64| match crossing {
        Crossing::Below => share < 0.5,
        Crossing::AtOrBelow => share <= 0.5,
    };
    match stats.iter().position(|s| below(s.0)) {
        Some(0) => Ok(PredictedPositives {
            lower: 1.0,
            mid: 1.0,
            upper: 1.0,
            unbounded: false,
        }),
        Some(k) => {
            let (lower, upper) = (stats[k - 1].1, stats[k].1);
            Ok(PredictedPositives {
                lower,
                mid: (lower + upper) / 2.0,
                upper,
                unbounded: false,
            })
        }
        None => {
            let lower = stats[bins - 1].1;
            let upper = (pool_size as f64).max(lower);
            Ok(PredictedPositives {
                lower,
                mid: (lower + upper) / 2.0,
                upper,
                unbounded: true,
            })
        }
    }
}

/// Mean of `1 - cos` over unordered pairs of unit vectors; 0 with fewer
/// than two vectors.
pub fn diversity(embeddings: &[Vec<f64>]) -> f64 {
    let n = embeddings.len();
    if n < 2 {
        return 0.0;
    }
    let dim = embeddings[0].len();
    let mut sum = vec![0.0; dim];
    let mut self_dots = 0.0;
    for e in embeddings {
        for (s, x) in sum.iter_mut().zip(e) {
            *s += x;
        }
        self_dots += e.iter().map(|x| x * x).sum::<f64>();
    }
    // sum over i < j of <e_i, e_j>
    let cross = (sum.iter().map(|x| x * x).sum::<f64>() - self_dots) / 2.0;
    let pairs = (n * (n - 1) / 2) as f64;
    1.0 - cross / pairs
}

/// Resampling summary of a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    pub se: f64,
}

/// `b` resamples with replacement of the same size as `items`; the mean and
/// sample standard deviation of `statistic` over them.
pub fn bootstrap_se<T, F>(items: &[T], statistic: F, b: usize, seed: u64) -> Result<BootstrapEstimate>
where
    T: Clone + Sync + Send,
    F: Fn(&[T]) -> f64 + Sync + Send,
{
    if items.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 items, got {}",
            items.len()
        )));
    }
    if b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 resamples".into()));
    }
    let stats = par::map_range(b, |i| {
        let mut rng = rng::substream(seed, i as u64);
        let sample: Vec<T> = (0..items.len())
            .map(|_| items[rng.random_range(0..items.len())].clone())
            .collect();
        statistic(&sample)
    });
    let mean = stats.iter().sum::<f64>() / b as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(BootstrapEstimate {
        mean,
        se: var.sqrt(),
    })
}

/// Unit-vector embeddings for diversity.
pub trait Embedder: Sync {
    /// `None` when the document has no usable embedding.
    fn embed(&self, corpus: &Corpus, doc: DocIdx) -> Option<Vec<f64>>;
}

/// Signed hashed bag of distinct tokens, normalized.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    pub dim: usize,
    buckets: Vec<(u32, f64)>,
}

impl HashedBagEmbedder {
    pub fn new(corpus: &Corpus, dim: usize) -> Self {
        let dim = dim.max(1);
        let buckets = corpus
            .vocab()
            .iter()
            .map(|(_, tok)| {
                let h = crate::scorer::features::fnv1a(tok.as_bytes(), 0x656d_6265_6464);
                let h = h ^ (h >> 29);
                ((h % dim as u64) as u32, if h >> 63 == 0 { 1.0 } else { -1.0 })
            })
            .collect();
        HashedBagEmbedder { dim, buckets }
    }
}

impl Embedder for HashedBagEmbedder {
    fn embed(&self, corpus: &Corpus, doc: DocIdx) -> Option<Vec<f64>> {
        let mut toks: Vec<TokenId> = corpus.doc(doc).tokens.to_vec();
        toks.sort_unstable();
        toks.dedup();
        let mut v = vec![0.0; self.dim];
        for t in toks {
            let (b, s) = self.buckets[t.0 as usize];
            v[b as usize] += s;
        }
        normalize(v)
    }
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Embeddings from a `doc_id,x1,...,xd` file, normalized on load.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    dim: usize,
    vectors: HashMap<DocIdx, Vec<f64>>,
}

impl FileEmbeddings {
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f), path, corpus)
    }

    pub fn read<R: BufRead>(reader: R, path: &Path, corpus: &Corpus) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        let mut unknown = Vec::new();
        let mut n_unknown = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or("").trim();
            let values: std::result::Result<Vec<f64>, _> =
                fields.map(|x| x.trim().parse::<f64>()).collect();
            let values = match values {
                Ok(v) => v,
                Err(_) if line_no == 1 => continue, // header
                Err(e) => return Err(Error::parse(path, line_no, e.to_string())),
            };
            if values.is_empty() {
                return Err(Error::parse(path, line_no, "no embedding values"));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected {d} values, got {}", values.len()),
                    ))
                }
                _ => {}
            }
            let Some(doc) = corpus.lookup(id) else {
                n_unknown += 1;
                if unknown.len() < 10 {
                    unknown.push(id.to_string());
                }
                continue;
            };
            let v = normalize(values)
                .ok_or_else(|| Error::parse(path, line_no, "zero-norm embedding"))?;
            if vectors.insert(doc, v).is_some() {
                return Err(Error::parse(path, line_no, format!("duplicate id {id:?}")));
            }
        }
        if n_unknown > 0 {
            return Err(Error::UnknownIds {
                count: n_unknown,
                first: unknown,
            });
        }
        Ok(FileEmbeddings {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for FileEmbeddings {
    fn embed(&self, _corpus: &Corpus, doc: DocIdx) -> Option<Vec<f64>> {
        self.vectors.get(&doc).cloned()
    }
}

/// Metrics for one class and strategy at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub class: String,
    pub strategy: String,
    pub iteration: u32,
    pub n_labels: usize,
    pub n_positive: usize,
    pub ap: f64,
    pub ap_se: f64,
    pub ap_boot_mean: f64,
    pub e_lower: Option<f64>,
    pub e_mid: Option<f64>,
    pub e_upper: Option<f64>,
    pub e_unbounded: bool,
    pub diversity: f64,
    pub diversity_se: f64,
    pub diversity_boot_mean: f64,
    pub schedule_truncated: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    pub bins: usize,
    pub bootstrap: usize,
    pub crossing: Crossing,
    pub window: usize,
    pub alpha: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            bins: 20,
            bootstrap: 1000,
            crossing: Crossing::Below,
            window: 2,
            alpha: 0.05,
        }
    }
}

/// Everything except `converged`, which needs the history.
#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    class: &str,
    strategy: &str,
    iteration: u32,
    items: &[RankedLabel],
    positive_embeddings: &[Vec<f64>],
    pool_size: usize,
    schedule_truncated: bool,
    opts: &MetricsOptions,
    seed: u64,
) -> Result<MetricsRecord> {
    let ap = average_precision(items)?;
    let ap_boot = if items.len() >= 2 {
        bootstrap_se(items, |s| average_precision(s).unwrap_or(0.0), opts.bootstrap, rng::derive(seed, "ap"))?
    } else {
        BootstrapEstimate { mean: ap, se: 0.0 }
    };
    let e = predicted_positives(items, opts.bins, pool_size, opts.crossing).ok();
    let div = diversity(positive_embeddings);
    let div_boot = if positive_embeddings.len() >= 2 {
        bootstrap_se(positive_embeddings, diversity, opts.bootstrap, rng::derive(seed, "diversity"))?
    } else {
        BootstrapEstimate { mean: div, se: 0.0 }
    };
    Ok(MetricsRecord {
        class: class.to_string(),
        strategy: strategy.to_string(),
        iteration,
        n_labels: items.len(),
        n_positive: items.iter().filter(|i| i.label).count(),
        ap,
        ap_se: ap_boot.se,
        ap_boot_mean: ap_boot.mean,
        e_lower: e.map(|e| e.lower),
        e_mid: e.map(|e| e.mid),
        e_upper: e.map(|e| e.upper),
        e_unbounded: e.is_some_and(|e| e.unbounded),
        diversity: div,
        diversity_se: div_boot.se,
        diversity_boot_mean: div_boot.mean,
        schedule_truncated,
        converged: false,
    })
}

/// Two-sided Welch test from two estimates with standard errors and sample
/// sizes. Returns the p-value.
pub fn welch_p_value(m1: f64, se1: f64, n1: usize, m2: f64, se2: f64, n2: usize) -> f64 {
    let v = se1 * se1 + se2 * se2;
    if v == 0.0 {
        return if m1 == m2 { 1.0 } else { 0.0 };
    }
    let t = (m1 - m2) / v.sqrt();
    let dof_term = |se: f64, n: usize| se.powi(4) / (n.max(2) - 1) as f64;
    let df = v * v / (dof_term(se1, n1) + dof_term(se2, n2));
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn intervals_overlap(a: &MetricsRecord, b: &MetricsRecord) -> bool {
    match (a.e_lower, a.e_upper, b.e_lower, b.e_upper) {
        (Some(l1), Some(u1), Some(l2), Some(u2)) => l1.max(l2) <= u1.min(u2),
        _ => false,
    }
}

/// Converged when each of the last `window` transitions shows no
/// significant change in AP or diversity and overlapping E intervals.
pub fn check_convergence(history: &[MetricsRecord], window: usize, alpha: f64) -> bool {
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    history[history.len() - window - 1..].windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        let p_ap = welch_p_value(a.ap_boot_mean, a.ap_se, a.n_labels, b.ap_boot_mean, b.ap_se, b.n_labels);
        let p_div = welch_p_value(
            a.diversity_boot_mean,
            a.diversity_se,
            a.n_positive,
            b.diversity_boot_mean,
            b.diversity_se,
            b.n_positive,
        );
        p_ap >= alpha && p_div >= alpha && intervals_overlap(a, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rl(rank: u64, label: bool) -> RankedLabel {
        RankedLabel { rank, label }
    }

    #[test]
    fn default_schedule_has_170_ranks() {
        let s = RankSchedule::standard();
        assert_eq!(s.intervals().len(), 16);
        assert_eq!(s.total(), 170);
        assert!(RankSchedule::new(s.intervals().to_vec()).is_ok());
        assert!(RankSchedule::new(vec![(5, 10), (8, 12)]).is_err());
        assert!(RankSchedule::new(vec![(0, 1)]).is_err());
    }

    #[test]
    fn geometric_schedule_is_valid() {
        let s = RankSchedule::geometric(20, 10, 4, 10_000).unwrap();
        assert_eq!(s.intervals()[0], (1, 20));
        assert!(s.intervals().last().unwrap().1 <= 10_000);
        assert!(s.intervals().len() > 8);
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[rl(1, true), rl(2, true), rl(5, false)]).unwrap();
        assert!((ap - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(average_precision(&[rl(3, true), rl(9, true)]).unwrap(), 1.0);
        assert!(average_precision(&[]).is_err());
    }

    #[test]
    fn predicted_positives_examples() {
        let items: Vec<_> = (1..=40).map(|i| rl(10 * i, i <= 10)).collect();
        let e = predicted_positives(&items, 20, 1000, Crossing::Below).unwrap();
        assert_eq!((e.lower, e.mid, e.upper), (95.0, 105.0, 115.0));
        let neg: Vec<_> = (1..=40).map(|i| rl(i, false)).collect();
        let e = predicted_positives(&neg, 20, 1000, Crossing::Below).unwrap();
        assert_eq!((e.lower, e.mid, e.upper), (1.0, 1.0, 1.0));
        let pos: Vec<_> = (1..=40).map(|i| rl(i, true)).collect();
        let e = predicted_positives(&pos, 20, 1000, Crossing::Below).unwrap();
        assert!(e.unbounded);
        assert_eq!((e.lower, e.upper), (39.5, 1000.0));
        assert!(predicted_positives(&pos[..10], 20, 1000, Crossing::Below).is_err());
    }

    #[test]
    fn diversity_examples() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        assert_eq!(diversity(&[a.clone(), a.clone()]), 0.0);
        assert_eq!(diversity(&[a.clone()]), 0.0);
        assert_eq!(diversity(&[a, b]), 1.0);
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let items = vec![3.0; 10];
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let e = bootstrap_se(&items, mean, 100, 1).unwrap();
        assert_eq!(e.se, 0.0);
        let items: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(bootstrap_se(&items, mean, 100, 1).unwrap(), bootstrap_se(&items, mean, 100, 1).unwrap());
        assert!(bootstrap_se(&items[..1], mean, 100, 1).is_err());
    }

    fn rec(ap: f64, se: f64, e: (f64, f64)) -> MetricsRecord {
        MetricsRecord {
            class: "c".into(),
            strategy: "s".into(),
            iteration: 0,
            n_labels: 100,
            n_positive: 20,
            ap,
            ap_se: se,
            ap_boot_mean: ap,
            e_lower: Some(e.0),
            e_mid: Some((e.0 + e.1) / 2.0),
            e_upper: Some(e.1),
            e_unbounded: false,
            diversity: 0.6,
            diversity_se: 0.02,
            diversity_boot_mean: 0.6,
            schedule_truncated: false,
            converged: false,
        }
    }

    #[test]
    fn convergence_rules() {
        let same = vec![rec(0.5, 0.05, (10.0, 20.0)); 3];
        assert!(check_convergence(&same, 2, 0.05));
        assert!(!check_convergence(&same[..2], 2, 0.05));
        let mut disjoint = same.clone();
        disjoint[2] = rec(0.5, 0.05, (30.0, 40.0));
        assert!(!check_convergence(&disjoint, 2, 0.05));
        let mut jump = same.clone();
        jump[2] = rec(0.9, 0.01, (10.0, 20.0));
        assert!(!check_convergence(&jump, 2, 0.05));
    }
}
