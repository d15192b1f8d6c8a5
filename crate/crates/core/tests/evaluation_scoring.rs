use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use rarefind_core::calibration::{
    calibrated_threshold, fit_logistic, mean_sigmoid, LogisticParams, BETA_CLIP,
};
use rarefind_core::corpus::Corpus;
use rarefind_core::evaluation::{
    average_precision, diversity, evaluation_sample, predicted_positives, Crossing, RankSchedule,
    RankedLabel, Ranking,
};
use rarefind_core::rng;
use rarefind_core::scorer::{
    auroc, feature_rows, fit_baseline_multiseed, score_pool, train_test_split, BoundScorer,
    FeatureHasher, LabeledExample, ScoreTable, ScorerConfig,
};

fn items_strategy() -> impl Strategy<Value = Vec<RankedLabel>> {
    prop::collection::btree_set(1u64..100_000, 1..150).prop_flat_map(|ranks| {
        let n = ranks.len();
        prop::collection::vec(any::<bool>(), n).prop_map(move |labels| {
            ranks
                .iter()
                .zip(labels)
                .map(|(&rank, label)| RankedLabel { rank, label })
                .collect::<Vec<_>>()
        })
    })
}

fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

proptest! {
    #[test]
    fn ap_bounds_and_top_flip(items in items_strategy()) {
        let ap = average_precision(&items).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert_eq!(ap == 1.0, items.iter().all(|i| i.label));
        let top = items.iter().enumerate().min_by_key(|(_, i)| i.rank).unwrap().0;
        if !items[top].label {
            let mut flipped = items.clone();
            flipped[top].label = true;
            prop_assert!(average_precision(&flipped).unwrap() > ap);
        }
    }

    #[test]
    fn predicted_positive_bounds_are_ordered(items in items_strategy(), bins in 1usize..20, extra in 0usize..1000) {
        prop_assume!(items.len() >= bins);
        let max_rank = items.iter().map(|i| i.rank).max().unwrap() as usize;
        for crossing in [Crossing::Below, Crossing::AtOrBelow] {
            let pp = predicted_positives(&items, bins, max_rank + extra, crossing).unwrap();
            prop_assert!(pp.lower <= pp.mid && pp.mid <= pp.upper);
        }
    }

    #[test]
    fn diversity_range_and_permutation(n in 0usize..40, seed in any::<u64>()) {
        let mut v = unit_vectors(n, 8, seed);
        let d = diversity(&v);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d));
        v.reverse();
        prop_assert!((diversity(&v) - d).abs() < 1e-12);
    }

    #[test]
    fn auroc_ignores_monotone_transforms(
        raw in prop::collection::vec((0u32..30, any::<bool>()), 2..200),
        a in 0.1f64..5.0,
        b in -3.0f64..3.0,
    ) {
        prop_assume!(raw.iter().any(|p| p.1) && raw.iter().any(|p| !p.1));
        let pts: Vec<(f64, bool)> = raw.iter().map(|&(s, l)| (s as f64, l)).collect();
        let mapped: Vec<(f64, bool)> = pts.iter().map(|&(s, l)| ((a * s + b).exp().ln_1p() + (s / 7.0).powi(3), l)).collect();
        prop_assert_eq!(auroc(&pts).unwrap(), auroc(&mapped).unwrap());
    }

    #[test]
    fn threshold_invariants(
        raw in prop::collection::vec((-20.0f64..20.0, 0.5f64..25.0), 1..30),
        rot in 0usize..30,
    ) {
        let ps: Vec<LogisticParams> = raw.iter().map(|&(b0, b1)| LogisticParams { beta0: b0, beta1: b1 }).collect();
        let tol = 1e-9;
        let r = calibrated_threshold(&ps, tol).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.x_star));
        if r.bracketed {
            prop_assert!((mean_sigmoid(&ps, r.x_star) - 0.5).abs() <= tol);
        }
        let mut rotated = ps.clone();
        rotated.rotate_left(rot % ps.len());
        let s = calibrated_threshold(&rotated, tol).unwrap();
        prop_assert!((s.x_star - r.x_star).abs() <= tol);
        if ps.len() == 1 {
            let want = (-ps[0].beta0 / ps[0].beta1).clamp(0.0, 1.0);
            prop_assert!((r.x_star - want).abs() <= tol);
        }
    }
}

#[test]
fn duplicated_embeddings_rescale_by_pair_count() {
    let v = unit_vectors(10, 6, 3);
    let d = diversity(&v);
    let doubled: Vec<Vec<f64>> = v.iter().chain(&v).cloned().collect();
    let n = v.len() as f64;
    // duplicates add zero-distance pairs
    let want = d * 2.0 * (n - 1.0) / (2.0 * n - 1.0);
    assert!((diversity(&doubled) - want).abs() < 1e-12);
}

#[test]
fn evaluation_sample_matches_full_sort() {
    let mut r = rng::seeded(4);
    let n = 100_000u32;
    // coarse scores force many ties
    let entries: Vec<(u32, f64)> = (0..n).map(|d| (d, r.random_range(0..5000) as f64 / 5000.0)).collect();
    let table = ScoreTable::new("c", 0, entries.clone()).unwrap();
    let mut sorted = entries;
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let schedule = RankSchedule::standard();
    let sample = evaluation_sample(&Ranking::new(&table), &schedule);
    assert!(sample.truncated);
    let want: Vec<(u32, u32)> = schedule
        .intervals()
        .iter()
        .filter(|&&(_, hi)| hi <= n as usize)
        .flat_map(|&(lo, hi)| lo..=hi)
        .map(|r| (sorted[r - 1].0, r as u32))
        .collect();
    assert_eq!(sample.docs, want);
}

/// Plain gradient ascent on the mean log-likelihood.
fn gradient_oracle(points: &[(f64, bool)]) -> (f64, f64) {
    let (mut b0, mut b1) = (0.0, 0.0);
    let n = points.len() as f64;
    for _ in 0..200_000 {
        let (mut g0, mut g1) = (0.0, 0.0);
        for &(x, y) in points {
            let e = y as u8 as f64 - 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
            g0 += e;
            g1 += e * x;
        }
        b0 += 2.0 * g0 / n;
        b1 += 2.0 * g1 / n;
        if g0.abs().max(g1.abs()) / n < 1e-10 {
            break;
        }
    }
    (b0, b1)
}

fn draw(n: usize, seed: u64) -> Vec<(f64, bool)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let x: f64 = r.random_range(0.0..1.0);
            (x, r.random_bool(1.0 / (1.0 + (5.0 - 10.0 * x).exp())))
        })
        .collect()
}

#[test]
fn logistic_fit_matches_gradient_oracle() {
    for seed in 0..3 {
        let points = draw(2000, seed);
        let fit = fit_logistic(&points).unwrap();
        assert!(!fit.separated);
        let (o0, o1) = gradient_oracle(&points);
        let (b0, b1) = (fit.params.beta0, fit.params.beta1);
        assert!((b0 - o0).abs() < 1e-4 && (b1 - o1).abs() < 1e-4, "{b0} {b1} vs {o0} {o1}");
    }
}

#[test]
fn logistic_fit_recovers_generating_curve() {
    // one 2000-point draw has a slope standard error near 0.4, so the
    // tolerance applies to the mean over independent draws
    let fits: Vec<LogisticParams> = (0..20).map(|s| fit_logistic(&draw(2000, 100 + s)).unwrap().params).collect();
    let b0 = fits.iter().map(|p| p.beta0).sum::<f64>() / 20.0;
    let b1 = fits.iter().map(|p| p.beta1).sum::<f64>() / 20.0;
    assert!((b0 + 5.0).abs() <= 0.5 && (b1 - 10.0).abs() <= 0.5, "{b0} {b1}");
}

#[test]
fn logistic_fit_degenerate_inputs() {
    let separable = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
    let fit = fit_logistic(&separable).unwrap();
    assert!(fit.separated);
    assert!(fit.params.beta0.abs() <= BETA_CLIP && fit.params.beta1.abs() <= BETA_CLIP);
    let noise: Vec<(f64, bool)> = (0..400).map(|i| (i as f64 / 400.0, i % 2 == 0)).collect();
    assert!(fit_logistic(&noise).unwrap().params.beta1.abs() < 0.1);
}

fn toy_corpus() -> Arc<Corpus> {
    let mut recs = Vec::new();
    for i in 0..400 {
        let text = match i % 4 {
            0 => format!("i lost my job today {}", i % 7),
            1 => format!("fired from work again {}", i % 5),
            _ => format!("nice weather in town {} {}", i % 9, i % 11),
        };
        recs.push((format!("t{i:04}"), text));
    }
    Arc::new(Corpus::from_records(recs).unwrap())
}

#[test]
fn multiseed_auroc_is_recomputable() {
    let c = toy_corpus();
    let examples: Vec<LabeledExample> = c
        .docs()
        .iter()
        .enumerate()
        .map(|(i, d)| LabeledExample {
            doc_id: d.id.clone(),
            class: "lost_job".into(),
            // a few label flips so the test AUROC is not trivially 1
            label: (i % 4 < 2) ^ (i % 37 == 0),
        })
        .collect();
    let (train, test) = train_test_split(&examples, 0.7, 8).unwrap();
    assert_eq!(train.len(), 280);
    let test_labels: BTreeSet<bool> = test.iter().map(|e| e.label).collect();
    assert_eq!(test_labels.len(), 2);
    let hasher = FeatureHasher::new(c.vocab());
    let tr = feature_rows(&c, &hasher, &train).unwrap();
    let te = feature_rows(&c, &hasher, &test).unwrap();
    let cfg = ScorerConfig {
        n_seeds: 4,
        ..ScorerConfig::default()
    };
    let m = fit_baseline_multiseed(&tr, &te, &cfg, 21).unwrap();
    let pts: Vec<(f64, bool)> = te.iter().map(|r| (m.model.predict(&r.features), r.label)).collect();
    assert_eq!(m.test_auroc, Some(auroc(&pts).unwrap()));

    let scorer = BoundScorer::new(&m.model, &c);
    let docs: Vec<u32> = (0..c.len() as u32).collect();
    let base = score_pool(&scorer, &c, &docs, "lost_job", 1);
    for threads in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(|| score_pool(&scorer, &c, &docs, "lost_job", 1));
        assert_eq!(again.entries(), base.entries(), "{threads} threads");
    }
    for &(d, s) in base.entries() {
        assert_eq!(s, m.model.predict(&hasher.features(&c.doc(d).tokens)).clamp(1e-9, 1.0 - 1e-9));
    }
}
