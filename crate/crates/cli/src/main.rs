use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rarefind_core::calibration;
use rarefind_core::evaluation::Ranking;
use rarefind_core::motif::{write_stats_csv, Motif};
use rarefind_core::orchestrator::{Experiment, ExperimentConfig, LabelerMode, Phase};
use rarefind_core::skipgram::{build_gram_index, compute_lift, VocabFilter};

#[derive(Parser)]
#[command(name = "rarefind", version, about = "Active learning for very rare positive documents")]
struct Cli {
    /// Experiment config (TOML). Used by `init`; later commands read the
    /// copy stored in the state directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed at `init`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "rarefind-state")]
    state_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the corpus, draw the seed sample and queue it for labeling.
    Init,
    /// Close the open labeling round and run the next iteration. In oracle
    /// mode, label and run `--rounds` iterations in one go.
    Iterate {
        #[arg(long, default_value_t = 1)]
        rounds: u32,
    },
    /// Print the session summary.
    Status,
    /// Print the metrics history.
    Evaluate {
        #[arg(long)]
        class: Option<String>,
    },
    /// Calibrated threshold of a class's current model on its evaluation
    /// labels, or of a `score,label` CSV given with `--points`.
    Calibrate {
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Lift of skip-grams over the top-scored sampling documents of a class.
    MineGrams {
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the labeling API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Write labels, evaluation labels, seed statistics and metrics to a
    /// directory.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Init => init(&cli),
        Command::Iterate { rounds } => iterate(&cli, *rounds),
        Command::Status => {
            let exp = open(&cli)?;
            print_json(&exp.session())
        }
        Command::Evaluate { class } => {
            let exp = open(&cli)?;
            let rows: Vec<_> = exp
                .metrics()
                .iter()
                .filter(|m| class.as_ref().is_none_or(|c| &m.class == c))
                .collect();
            print_json(&rows)
        }
        Command::Calibrate {
            class,
            points,
            bootstrap,
            tol,
        } => {
            let pts = match (points, class) {
                (Some(path), _) => read_points(path)?,
                (None, Some(c)) => open(&cli)?.eval_points(c)?,
                (None, None) => bail!("give --class or --points"),
            };
            let seed = cli.seed.unwrap_or(0);
            print_json(&calibration::calibrate(&pts, *bootstrap, seed, *tol)?)
        }
        Command::MineGrams { class, n, top, out } => mine_grams(&cli, class, *n, *top, out.as_deref()),
        Command::Serve { addr } => {
            let exp = open(&cli)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(rarefind_server::serve(exp, *addr))
                .with_context(|| format!("serving on {addr}"))
        }
        Command::Export { out } => export(&cli, out),
    }
}

fn open(cli: &Cli) -> Result<Experiment> {
    Experiment::open(&cli.state_dir).with_context(|| format!("opening {}", cli.state_dir.display()))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn init(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().context("init needs --config")?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let exp = Experiment::initialize(cfg, &cli.state_dir)?;
    print_json(&exp.session())
}

fn iterate(cli: &Cli, rounds: u32) -> Result<()> {
    let mut exp = open(cli)?;
    if exp.config().labeler == LabelerMode::Oracle {
        exp.run_oracle(rounds)?;
    } else {
        if rounds != 1 {
            bail!("human mode runs one iteration at a time");
        }
        if exp.state().phase != Phase::Ready {
            exp.advance()?;
        }
        exp.run_iteration()?;
    }
    print_json(&exp.session())
}

fn read_points(path: &Path) -> Result<Vec<(f64, bool)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let (s, l) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected score,label", path.display(), i + 1))?;
        let score: f64 = s.trim().parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let label = match l.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => bail!("{}:{}: bad label {other:?}", path.display(), i + 1),
        };
        out.push((score, label));
    }
    Ok(out)
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn mine_grams(cli: &Cli, class: &str, n: usize, top: usize, out: Option<&Path>) -> Result<()> {
    let exp = open(cli)?;
    let scores = exp.sampling_scores(class)?;
    let ranking = Ranking::new(&scores);
    let ee = &exp.config().exploit_explore;
    let filter = match &ee.vocab_file {
        Some(p) => VocabFilter::from_file(p)?,
        None => VocabFilter::default(),
    };
    let pool = &exp.pools().sampling;
    let index = build_gram_index(pool, n, &filter, ee.min_freq)?;
    let table = compute_lift(ranking.top(top), pool, &index)?;
    let mut w = output(out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn export(cli: &Cli, dir: &Path) -> Result<()> {
    let exp = open(cli)?;
    std::fs::create_dir_all(dir)?;
    let state = exp.state();

    let mut w = BufWriter::new(File::create(dir.join("labels.csv"))?);
    writeln!(w, "doc_id,class,label,round")?;
    for (l, round) in exp.labels() {
        writeln!(w, "{},{},{},{}", l.doc_id, l.class, u8::from(l.label), round)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("eval_labels.csv"))?);
    writeln!(w, "doc_id,class,label")?;
    for (class, docs) in &state.eval_pool {
        for id in docs {
            if let Some(&label) = state.eval_labels.get(class).and_then(|m| m.get(id)) {
                writeln!(w, "{id},{class},{}", u8::from(label))?;
            }
        }
    }
    w.flush()?;

    for (class, seeds) in &state.seeds {
        let rows: Vec<_> = seeds
            .iter()
            .filter_map(|s| Some((Motif::parse(&s.motif).ok()?, s.stats?)))
            .collect();
        if !rows.is_empty() {
            write_stats_csv(File::create(dir.join(format!("seeds_{class}.csv")))?, &rows)?;
        }
    }
    std::fs::write(dir.join("metrics.json"), exp.metrics_json()?)?;
    eprintln!("exported to {}", dir.display());
    Ok(())
}
