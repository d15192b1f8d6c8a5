//! Run the planted-positive experiment and print metrics per iteration.
//!
//! cargo run --release -p rarefind-core --example synthetic_run -- [strategy] [n_docs] [iterations]

use std::sync::Arc;
use std::time::Instant;

use rarefind_core::evaluation::RankSchedule;
use rarefind_core::orchestrator::Experiment;
use rarefind_core::strategies::Strategy;
use rarefind_core::synthetic::{SyntheticConfig, SyntheticCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber_init();
    let args: Vec<String> = std::env::args().collect();
    let strategy: Strategy = args.get(1).map_or(Ok(Strategy::ExploitExplore), |s| s.parse())?;
    let n_docs: usize = args.get(2).map_or(Ok(1_000_000), |s| s.parse())?;
    let iterations: u32 = args.get(3).map_or(Ok(5), |s| s.parse())?;

    let t = Instant::now();
    let synth = SyntheticCorpus::generate(&SyntheticConfig {
        n_docs,
        ..SyntheticConfig::default()
    });
    let corpus = Arc::new(synth.corpus()?);
    eprintln!("corpus: {} docs, {} positives, {:.1?}", corpus.len(), synth.positives, t.elapsed());

    let mut cfg = synth.experiment_config("synthetic.jsonl", strategy);
    cfg.evaluation.schedule = Some(RankSchedule::geometric(200, 10, 3, n_docs / 2)?);
    let dir = tempfile::tempdir()?;
    let mut exp = Experiment::initialize_with(cfg, corpus, dir.path())?;
    for _ in 0..iterations {
        let t = Instant::now();
        if exp.state().phase != rarefind_core::orchestrator::Phase::Ready {
            exp.advance()?;
        }
        let round = exp.run_iteration()?.clone();
        eprintln!("round {} queued {} notes {:?} ({:.1?})", round.round, round.queued, round.notes, t.elapsed());
        for (c, grams) in &round.grams {
            let shown: Vec<String> = grams.iter().map(|g| format!("{}:{:.0}", g.gram, g.lift)).collect();
            eprintln!("  {c} grams {}", shown.join(" "));
        }
        for (c, m) in &round.models {
            eprintln!("  {c} model seed {} auroc {:?} train {}", m.seed, m.test_auroc, m.train_size);
        }
    }
    exp.advance()?;
    for m in exp.metrics() {
        println!(
            "{} {} it={} labels={} pos={} ap={:.3}±{:.3} E=({:?},{:?},{:?}) div={:.3} conv={}",
            m.class, m.strategy, m.iteration, m.n_labels, m.n_positive, m.ap, m.ap_se, m.e_lower, m.e_mid, m.e_upper,
            m.diversity, m.converged
        );
    }
    let s = exp.session();
    for c in &s.classes {
        println!("{}: labeled {} positives {}", c.class, c.labeled, c.positives);
    }
    let found: std::collections::BTreeSet<usize> = exp
        .state()
        .rounds
        .iter()
        .flat_map(|r| r.grams.values().flatten())
        .flat_map(|g| {
            synth
                .families
                .iter()
                .enumerate()
                .filter(|(_, f)| f.is_characteristic(&g.gram.0))
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        })
        .collect();
    println!("families with characteristic grams selected: {found:?}");
    Ok(())
}

fn tracing_subscriber_init() {}
