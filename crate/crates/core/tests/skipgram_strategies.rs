use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use rarefind_core::corpus::{Corpus, Pool};
use rarefind_core::motif::Motif;
use rarefind_core::scorer::ScoreTable;
use rarefind_core::skipgram::{
    build_gram_index, compute_lift, enumerate_skipgrams, select_top_lift, LiftEntry, SkipGram, VocabFilter,
};
use rarefind_core::strategies::{
    query_adaptive, query_exploit_explore, query_stratified, query_uncertainty, ExploitExploreConfig,
};

const WORDS: &[&str] = &["ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen", "42", "!"];

fn pool_of(docs: &[Vec<usize>]) -> Pool {
    Pool::whole(Arc::new(
        Corpus::from_records(docs.iter().enumerate().map(|(i, d)| {
            let text: Vec<&str> = d.iter().map(|&w| WORDS[w]).collect();
            (format!("doc{i:05}"), text.join(" "))
        }))
        .unwrap(),
    ))
}

fn docs_strategy(max_docs: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..WORDS.len(), 0..=7), 1..=max_docs)
}

/// Document frequency of every admissible gram by direct enumeration.
fn df_oracle(pool: &Pool, n: usize) -> BTreeMap<Vec<String>, u32> {
    let mut df = BTreeMap::new();
    for d in pool.available() {
        let toks: Vec<String> = pool.corpus().token_strs(d).iter().map(|s| s.to_string()).collect();
        for g in enumerate_skipgrams(&toks, n) {
            let distinct: BTreeSet<&String> = g.iter().collect();
            if distinct.len() == n && g.iter().all(|t| VocabFilter::default_rule(t)) {
                *df.entry(g).or_insert(0) += 1;
            }
        }
    }
    df
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn distinct_tokens_give_exactly_n_choose_k() {
    for len in 0..=10usize {
        let tokens: Vec<usize> = (0..len).collect();
        for n in 2..=3 {
            assert_eq!(enumerate_skipgrams(&tokens, n).len(), binom(len, n));
        }
    }
}

proptest! {
    #[test]
    fn gram_count_bounded_by_distinct_choose(tokens in prop::collection::vec(0u8..4, 0..=10), n in 2usize..=3) {
        let distinct = tokens.iter().collect::<BTreeSet<_>>().len();
        let grams = enumerate_skipgrams(&tokens, n);
        // repeats allowed in the tuple, so bound by the multiset count
        prop_assert!(grams.len() <= binom(tokens.len(), n));
        let unique_tuples = grams.iter().filter(|g| g.iter().collect::<BTreeSet<_>>().len() == n).count();
        prop_assert!(unique_tuples <= binom(distinct, n) * (1..=n).product::<usize>());
    }

    #[test]
    fn index_counts_match_brute_force(docs in docs_strategy(120), n in 2usize..=3, min_freq in 0.0f64..0.2) {
        let pool = pool_of(&docs);
        let Ok(index) = build_gram_index(&pool, n, &VocabFilter::default(), min_freq) else {
            return Ok(());
        };
        let size = pool.available_len() as f64;
        let want: BTreeMap<Vec<String>, u32> = df_oracle(&pool, n)
            .into_iter()
            .filter(|&(_, c)| c as f64 / size >= min_freq)
            .collect();
        let got: BTreeMap<Vec<String>, u32> =
            index.entries(pool.corpus().vocab()).into_iter().map(|(g, c)| (g.0, c)).collect();
        prop_assert_eq!(&got, &want);
        prop_assert!(got.values().all(|&c| c as usize <= index.corpus_size()));
    }

    #[test]
    fn lift_is_ratio_and_bounded(docs in docs_strategy(120), top_n in 1usize..30, n in 2usize..=3) {
        let pool = pool_of(&docs);
        let Ok(index) = build_gram_index(&pool, n, &VocabFilter::default(), 0.0) else {
            return Ok(());
        };
        let top: Vec<u32> = pool.members().iter().copied().take(top_n).collect();
        let table = compute_lift(&top, &pool, &index).unwrap();
        let oracle = df_oracle(&pool, n);
        for e in &table.entries {
            prop_assert!(e.pool_freq > 0.0);
            prop_assert_eq!(e.lift, e.top_freq / e.pool_freq);
            prop_assert!(e.lift <= 1.0 / e.pool_freq + 1e-12);
            prop_assert_eq!(e.pool_count, oracle[&e.gram.0]);
            let in_top = top
                .iter()
                .filter(|&&d| Motif::Ordered(e.gram.0.clone()).matches_tokens(&pool.corpus().token_strs(d)))
                .count();
            prop_assert_eq!(e.top_count as usize, in_top);
        }
    }

    #[test]
    fn top_lift_selection_invariants(
        raw in prop::collection::vec((prop::collection::vec(0usize..8, 2..=3), 0.0f64..50.0), 0..60),
        used in prop::collection::vec(prop::collection::vec(0usize..8, 2..=3), 0..10),
        k in 1usize..6,
    ) {
        let gram = |g: &[usize]| SkipGram::new(&g.iter().map(|&w| WORDS[w]).collect::<Vec<_>>());
        let mut seen = HashSet::new();
        let entries: Vec<LiftEntry> = raw
            .iter()
            .filter(|(g, _)| g.iter().collect::<HashSet<_>>().len() == g.len() && seen.insert(g.clone()))
            .map(|(g, lift)| LiftEntry {
                gram: gram(g),
                top_count: 1,
                pool_count: 1,
                top_freq: *lift,
                pool_freq: 1.0,
                lift: *lift,
            })
            .collect();
        let used: HashSet<SkipGram> = used.iter().map(|g| gram(g)).collect();
        let out = select_top_lift(&entries, &used, k);
        for n in 2..=3 {
            let sel: Vec<&LiftEntry> = out.selected.iter().filter(|e| e.gram.n() == n).collect();
            prop_assert!(sel.len() <= k);
            prop_assert!(sel.windows(2).all(|w| w[0].lift >= w[1].lift));
            for (i, a) in sel.iter().enumerate() {
                prop_assert!(!used.contains(&a.gram));
                for b in &sel[i + 1..] {
                    prop_assert!(!a.gram.shares_token(&b.gram));
                }
            }
        }
    }
}

fn scores_for(pool: &Pool, f: impl Fn(u32) -> f64) -> ScoreTable {
    ScoreTable::new("c", 1, pool.available().into_iter().map(|d| (d, f(d))).collect()).unwrap()
}

proptest! {
    #[test]
    fn adaptive_takes_the_top_scores(raw in prop::collection::vec(0u32..20, 1..200), n in 0usize..50) {
        let pool = pool_of(&vec![vec![0]; raw.len()]);
        let scores = scores_for(&pool, |d| raw[d as usize] as f64 / 20.0);
        let b = query_adaptive(&scores, n, 1);
        let mut sorted: Vec<(u32, u32)> = raw.iter().enumerate().map(|(d, &s)| (s, d as u32)).collect();
        sorted.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let want: Vec<u32> = sorted.iter().take(n).map(|p| p.1).collect();
        let mut got = b.ids();
        got.sort_unstable();
        let mut want_sorted = want.clone();
        want_sorted.sort_unstable();
        prop_assert_eq!(got, want_sorted);
        prop_assert_eq!(b.shortfall, raw.len() < n);
    }

    #[test]
    fn uncertainty_minimises_distance_to_center(raw in prop::collection::vec(0u32..40, 1..200), n in 0usize..50, c in 0.0f64..1.0) {
        let pool = pool_of(&vec![vec![0]; raw.len()]);
        let scores = scores_for(&pool, |d| raw[d as usize] as f64 / 40.0);
        let b = query_uncertainty(&scores, n, c, 1);
        let ids = b.ids();
        prop_assert_eq!(ids.len(), n.min(raw.len()));
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
        let dist = |d: u32| (scores.get(d).unwrap() - c).abs();
        let worst_in = ids.iter().map(|&d| dist(d)).fold(0.0, f64::max);
        for d in 0..raw.len() as u32 {
            if !ids.contains(&d) {
                prop_assert!(dist(d) >= worst_in);
            }
        }
    }
}

fn themed_pool(excluded: usize) -> Pool {
    let docs: Vec<Vec<usize>> = (0..600)
        .map(|i| match i % 6 {
            0 => vec![0, 1, 2, (i / 6) % 8],
            1 => vec![0, 3, 4],
            2 => vec![5, 1, 6],
            _ => vec![(i / 7) % 8, (i / 3) % 8, 7],
        })
        .collect();
    let mut pool = pool_of(&docs);
    pool.exclude_ids(0..excluded as u32);
    pool
}

#[test]
fn exploit_explore_is_fresh_unique_and_thread_independent() {
    let pool = themed_pool(50);
    let scores = scores_for(&pool, |d| if d % 6 == 0 { 0.9 } else { 0.1 + (d % 5) as f64 / 100.0 });
    let filter = VocabFilter::default();
    let i2 = build_gram_index(&pool, 2, &filter, 0.0).unwrap();
    let i3 = build_gram_index(&pool, 3, &filter, 0.0).unwrap();
    let used: HashSet<SkipGram> = [SkipGram::new(&["ant", "bee"])].into_iter().collect();
    let cfg = ExploitExploreConfig {
        n_exploit: 10,
        top_size: 100,
        k_per_n: 2,
        per_gram: 3,
    };
    let run = || query_exploit_explore(&scores, &pool, &i2, &i3, &used, 9, &cfg, 1).unwrap();
    let a = run();
    let ids = a.batch.ids();
    assert!(!ids.is_empty());
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
    assert!(ids.iter().all(|&d| pool.is_available(d)));
    assert!(a.grams.iter().all(|g| !used.contains(&g.gram)));
    for (i, g) in a.grams.iter().enumerate() {
        for h in &a.grams[i + 1..] {
            assert!(g.gram.n() != h.gram.n() || !g.gram.shares_token(&h.gram));
        }
    }
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(run), a, "{threads} threads");
    }
}

#[test]
fn stratified_draws_round_robin_from_seed_matches() {
    let pool = themed_pool(0);
    let vocab = pool.corpus().vocab();
    let seeds = [Motif::parse("(ant, cat)").unwrap(), Motif::parse("fox").unwrap()];
    let compiled: Vec<_> = seeds.iter().map(|m| m.compile(vocab)).collect();
    let b = query_stratified("c", &compiled, &pool, 20, 3, 1);
    assert_eq!(b.len(), 20);
    let ids = b.ids();
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 20);
    for &d in &ids {
        let toks = pool.corpus().token_strs(d);
        assert!(seeds.iter().any(|m| m.matches_tokens(&toks)));
    }
    assert_eq!(query_stratified("c", &compiled, &pool, 20, 3, 1), b);
}
