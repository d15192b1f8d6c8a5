use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rarefind(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarefind"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small corpus where "alpha ... beta" marks a positive and "alpha" alone
/// is the only seed.
fn write_fixture(dir: &Path) {
    let mut lines = String::new();
    for i in 0..4000usize {
        let filler = ["red", "green", "blue", "cyan", "pink", "gray", "teal", "navy"];
        let mut words: Vec<&str> = (0..5).map(|k| filler[(i * 3 + k * 7 + i / 11) % filler.len()]).collect();
        match i % 40 {
            0 | 1 => {
                words.insert(1, "alpha");
                words.push("beta");
            }
            2 => words.insert(0, "alpha"),
            3 => {
                words.insert(0, "gamma");
                words.push("delta");
            }
            _ => {}
        }
        let text = words.join(" ");
        lines.push_str(&serde_json::json!({"id": format!("t{i:04}"), "text": text}).to_string());
        lines.push('\n');
    }
    std::fs::write(dir.join("corpus.jsonl"), lines).unwrap();
    std::fs::write(
        dir.join("experiment.toml"),
        r#"corpus = "corpus.jsonl"
seed = 5
labeler = "oracle"
batch_size = 20
init_per_seed = 30

[[classes]]
name = "planted"
question = "Planted positive?"
seeds = ["alpha"]
oracle = ["(alpha, beta)", "(gamma, delta)"]

[scorer]
n_seeds = 3

[evaluation]
schedule = [[1, 20], [41, 50], [101, 110], [301, 310], [1001, 1010]]
bootstrap = 50

[exploit_explore]
n_exploit = 10
top_size = 200
k_per_n = 2
per_gram = 3
min_freq = 0.0
"#,
    )
    .unwrap();
}

#[test]
fn oracle_workflow_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_fixture(dir);

    let init: Value = serde_json::from_str(&ok(rarefind(dir, &["init", "--config", "experiment.toml", "--state-dir", "st"]))).unwrap();
    assert_eq!(init["phase"]["phase"], "labeling");
    assert!(init["queue"].as_u64().unwrap() > 0);
    // a second init refuses to overwrite
    assert!(!rarefind(dir, &["init", "--config", "experiment.toml", "--state-dir", "st"]).status.success());

    let status: Value = serde_json::from_str(&ok(rarefind(dir, &["iterate", "--rounds", "3", "--state-dir", "st"]))).unwrap();
    assert_eq!(status["phase"]["phase"], "ready");
    assert_eq!(status["iteration"], 3);

    let metrics: Value = serde_json::from_str(&ok(rarefind(dir, &["evaluate", "--state-dir", "st"]))).unwrap();
    let metrics = metrics.as_array().unwrap();
    assert_eq!(metrics.len(), 3);
    let file: Value = serde_json::from_slice(&std::fs::read(dir.join("st/metrics.json")).unwrap()).unwrap();
    assert_eq!(file.as_array().unwrap(), metrics);

    let grams = ok(rarefind(dir, &["mine-grams", "--class", "planted", "--top", "50", "--state-dir", "st"]));
    assert!(grams.starts_with("gram,top_freq,pool_freq,lift\n"));

    let cal: Value = serde_json::from_str(&ok(rarefind(
        dir,
        &["calibrate", "--class", "planted", "--bootstrap", "50", "--state-dir", "st"],
    )))
    .unwrap();
    assert!(cal["x_star"].is_number());

    std::fs::write(dir.join("points.csv"), "score,label\n0.1,0\n0.3,0\n0.45,1\n0.55,0\n0.7,1\n0.9,1\n").unwrap();
    let cal: Value = serde_json::from_str(&ok(rarefind(dir, &["calibrate", "--points", "points.csv", "--bootstrap", "200"]))).unwrap();
    let x = cal["x_star"].as_f64().unwrap();
    assert!((0.1..=0.9).contains(&x), "{x}");

    ok(rarefind(dir, &["export", "--out", "out", "--state-dir", "st"]));
    let labels = std::fs::read_to_string(dir.join("out/labels.csv")).unwrap();
    assert!(labels.starts_with("doc_id,class,label,round\n"));
    assert!(labels.lines().count() > 1);
    assert!(dir.join("out/eval_labels.csv").exists());
    assert!(dir.join("out/metrics.json").exists());
    assert!(dir.join("st/events.jsonl").exists());
    assert!(dir.join("st/batches.jsonl").exists());
}

#[test]
fn same_config_same_metrics_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_fixture(dir);
    for st in ["a", "b"] {
        ok(rarefind(dir, &["init", "--config", "experiment.toml", "--state-dir", st]));
        ok(rarefind(dir, &["iterate", "--rounds", "2", "--state-dir", st]));
    }
    let a = std::fs::read(dir.join("a/metrics.json")).unwrap();
    let b = std::fs::read(dir.join("b/metrics.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(dir.join("a/state.json")).unwrap(),
        std::fs::read(dir.join("b/state.json")).unwrap()
    );

    ok(rarefind(dir, &["init", "--config", "experiment.toml", "--seed", "6", "--state-dir", "c"]));
    let c = std::fs::read_to_string(dir.join("c/config.toml")).unwrap();
    assert!(c.contains("seed = 6"));
}

#[test]
fn errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rarefind(dir, &["status", "--state-dir", "missing"]);
    assert!(!out.status.success());
    let out = rarefind(dir, &["init"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));

    // port already taken
    write_fixture(dir);
    ok(rarefind(dir, &["init", "--config", "experiment.toml", "--state-dir", "st"]));
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let out = rarefind(dir, &["serve", "--addr", &addr, "--state-dir", "st"]);
    assert!(!out.status.success());
}
