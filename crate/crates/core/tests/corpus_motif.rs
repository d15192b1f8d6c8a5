use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use rarefind_core::corpus::{split_corpus, tokenize, Corpus, MatchQuery, Pool};
use rarefind_core::motif::{estimate_stats, select_seeds, Motif, MotifStats, SeedRule};
use rarefind_core::skipgram::enumerate_skipgrams;

const WORDS: &[&str] = &["a", "b", "c", "d", "e"];

fn corpus_of(docs: &[Vec<usize>]) -> Arc<Corpus> {
    Arc::new(
        Corpus::from_records(docs.iter().enumerate().map(|(i, d)| {
            let text: Vec<&str> = d.iter().map(|&w| WORDS[w]).collect();
            (format!("doc{i:05}"), text.join(" "))
        }))
        .unwrap(),
    )
}

fn docs_strategy(max_docs: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..WORDS.len(), 0..=max_len), 1..=max_docs)
}

proptest! {
    #[test]
    fn tokenize_round_trips_plain_tokens(tokens in prop::collection::vec("[a-z0-9]{1,6}('[a-z]{1,3})?|[!?.,;]{1,3}|[#@][a-z_]{1,5}|https://[a-z./]{1,8}", 0..20)) {
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens.clone());
        prop_assert_eq!(tokenize(&tokens.join("  \t")), tokens);
    }

    #[test]
    fn split_partitions_the_corpus(docs in docs_strategy(300, 4), ratio in 0.0f64..=1.0, seed in any::<u64>()) {
        let c = corpus_of(&docs);
        let p = split_corpus(c.clone(), ratio, seed).unwrap();
        let e: BTreeSet<u32> = p.eval.members().iter().copied().collect();
        let s: BTreeSet<u32> = p.sampling.members().iter().copied().collect();
        prop_assert!(e.is_disjoint(&s));
        prop_assert_eq!(e.len() + s.len(), c.len());
        prop_assert_eq!(e.len(), (ratio * c.len() as f64).round() as usize);
        let again = split_corpus(c, ratio, seed).unwrap();
        prop_assert_eq!(again.eval.members(), p.eval.members());
    }

    #[test]
    fn every_doc_is_reachable_from_each_of_its_tokens(docs in docs_strategy(200, 6)) {
        let c = corpus_of(&docs);
        let pool = Pool::whole(c.clone());
        for (tok, _) in c.vocab().iter() {
            let posting = pool.index().posting(tok);
            prop_assert!(posting.windows(2).all(|w| w[0] < w[1]));
        }
        for (i, doc) in c.docs().iter().enumerate() {
            for t in doc.tokens.iter().collect::<HashSet<_>>() {
                prop_assert!(pool.index().posting(*t).binary_search(&(i as u32)).is_ok());
            }
        }
    }

    #[test]
    fn samplers_return_matching_unexcluded_docs(
        docs in docs_strategy(300, 6),
        a in 0..WORDS.len(),
        b in 0..WORDS.len(),
        excluded in prop::collection::vec(0u32..300, 0..100),
        n in 0usize..50,
        seed in any::<u64>(),
    ) {
        let c = corpus_of(&docs);
        let mut pool = Pool::whole(c.clone());
        pool.exclude_ids(excluded.iter().copied().filter(|&d| (d as usize) < c.len()));
        let motif = Motif::ordered(&[WORDS[a], WORDS[b]]);
        let compiled = motif.compile(c.vocab());
        let sample = pool.sample_matching(MatchQuery::Motif(&compiled), n, seed);
        let distinct: HashSet<_> = sample.docs.iter().collect();
        prop_assert_eq!(distinct.len(), sample.docs.len());
        for &d in &sample.docs {
            prop_assert!(!pool.is_excluded(d));
            prop_assert!(motif.matches_tokens(&c.token_strs(d)));
        }
        let available = (0..c.len() as u32)
            .filter(|&d| !pool.is_excluded(d) && motif.matches_tokens(&c.token_strs(d)))
            .count();
        prop_assert_eq!(sample.docs.len(), n.min(available));
        prop_assert_eq!(sample.shortfall, available < n);
        let any = pool.sample_matching(MatchQuery::Any, n, seed);
        prop_assert!(any.docs.iter().all(|&d| !pool.is_excluded(d)));
    }

    #[test]
    fn ordered_motif_iff_skipgram_member(doc in prop::collection::vec(0..WORDS.len(), 0..=12)) {
        let tokens: Vec<&str> = doc.iter().map(|&w| WORDS[w]).collect();
        for n in 1..=3 {
            let grams = enumerate_skipgrams(&tokens, n);
            // every gram over the alphabet, not only those present
            for code in 0..WORDS.len().pow(n as u32) {
                let g: Vec<&str> = (0..n).map(|i| WORDS[code / WORDS.len().pow(i as u32) % WORDS.len()]).collect();
                prop_assert_eq!(Motif::ordered(&g).matches_tokens(&tokens), grams.contains(&g));
            }
        }
    }

    #[test]
    fn frequency_is_the_brute_force_share(docs in docs_strategy(400, 6), a in 0..WORDS.len(), b in 0..WORDS.len()) {
        let c = corpus_of(&docs);
        let pool = Pool::whole(c.clone());
        let motif = Motif::ordered(&[WORDS[a], WORDS[b]]);
        let stats = estimate_stats(&motif, &pool, |_| Some(false), 10, 1).unwrap();
        let hits = (0..c.len() as u32).filter(|&d| motif.matches_tokens(&c.token_strs(d))).count();
        prop_assert_eq!(stats.frequency, hits as f64 / c.len() as f64);
        prop_assert!(stats.specificity.is_none_or(|s| s == 0.0));
    }

    #[test]
    fn seed_retention_is_monotone(s in 0.0f64..=1.0, f in 0.0f64..=1e-4, ds in 0.0f64..=1.0, df in 0.0f64..=1e-4) {
        let rule = SeedRule::default();
        if rule.retains(&MotifStats::new(s, f)) {
            prop_assert!(rule.retains(&MotifStats::new((s + ds).min(1.0), f)));
            prop_assert!(rule.retains(&MotifStats::new(s, f + df)));
        }
    }
}

#[test]
fn phrase_matching_is_contiguous_and_token_level() {
    let m = Motif::parse("lost my job").unwrap();
    assert!(m.matches_text("I LOST my job today"));
    assert!(!m.matches_text("lost my new job"));
    assert!(!Motif::parse("job").unwrap().matches_text("i am jobless"));
    let g = Motif::parse("(need, job)").unwrap();
    assert!(g.matches_text("i need a job"));
    assert!(!g.matches_text("job i need"));
}

#[test]
fn published_rows_pass_and_low_rows_fail() {
    let rows = vec![
        (Motif::parse("unemployed").unwrap(), MotifStats::new(0.15, 7.4e-5)),
        (Motif::parse("rare").unwrap(), MotifStats::new(0.5, 1e-7)),
        (Motif::parse("vague").unwrap(), MotifStats::new(0.005, 1e-2)),
    ];
    assert_eq!(select_seeds(&rows), vec![Motif::parse("unemployed").unwrap()]);
}
