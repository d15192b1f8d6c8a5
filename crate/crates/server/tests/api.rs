use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rarefind_core::corpus::Corpus;
use rarefind_core::orchestrator::config::default_classes;
use rarefind_core::orchestrator::{Answer, AnnotationRecord, Experiment, ExperimentConfig, LabelerMode};
use rarefind_server::{router, Shared};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

const PHRASES: &[&str] = &[
    "i got fired today",
    "just got fired from the store",
    "i was laid off this morning",
    "lost my job again",
    "i got hired at the bank",
    "so happy i found a new job",
    "i am unemployed and bored",
    "still jobless after months",
    "unemployment benefits ran out",
    "anyone hiring in town",
    "i need a job asap",
    "we are hiring apply now",
    "great opportunity for a new job",
];
const FILLER: &[&str] = &[
    "the", "sun", "coffee", "train", "music", "game", "rain", "city", "friends", "weekend", "pizza", "movie",
];

fn corpus() -> Arc<Corpus> {
    let mut recs = Vec::new();
    for i in 0..3000usize {
        let mut words: Vec<&str> = (0..6).map(|k| FILLER[(i * 7 + k * 5 + i / 13) % FILLER.len()]).collect();
        if i % 3 == 0 {
            words.insert(2, PHRASES[(i / 3) % PHRASES.len()]);
        }
        recs.push((format!("d{i:05}"), words.join(" ")));
    }
    Arc::new(Corpus::from_records(recs).unwrap())
}

fn human_experiment(dir: &std::path::Path) -> Shared {
    let mut cfg = ExperimentConfig::new("unused.jsonl");
    cfg.labeler = LabelerMode::Human;
    cfg.init_per_seed = 5;
    cfg.batch_size = 10;
    cfg.scorer.n_seeds = 2;
    cfg.evaluation.bootstrap = 20;
    let exp = Experiment::initialize_with(cfg, corpus(), dir).unwrap();
    Arc::new(RwLock::new(exp))
}

async fn call(s: &Shared, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(s.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(s: &Shared, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(s, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn answers(text: &str, checks: &BTreeMap<String, BTreeMap<String, Answer>>) -> BTreeMap<String, Answer> {
    if let Some(key) = checks.get(text) {
        return key.clone();
    }
    let yes = |words: &[&str]| words.iter().any(|w| text.contains(w));
    let a = |b: bool| if b { Answer::Yes } else { Answer::No };
    [
        ("lost_job", a(yes(&["fired", "laid off", "lost my job"]))),
        ("is_hired", a(yes(&["hired at", "found a new job"]))),
        ("is_unemployed", a(yes(&["unemployed", "jobless"]))),
        ("job_search", a(yes(&["anyone hiring", "need a job"]))),
        ("job_offer", a(yes(&["apply now", "opportunity"]))),
    ]
    .into_iter()
    .map(|(c, v)| (c.to_string(), v))
    .collect()
}

fn check_keys() -> BTreeMap<String, BTreeMap<String, Answer>> {
    ExperimentConfig::new("x")
        .human
        .attention_checks
        .into_iter()
        .map(|c| (c.text, c.answers))
        .collect()
}

#[tokio::test]
async fn tasks_come_with_five_questions_and_attention_checks() {
    let dir = tempfile::tempdir().unwrap();
    let s = human_experiment(dir.path());
    let (status, v) = call_json(&s, "GET", "/api/tasks/next?annotator=a1&n=50", None).await;
    assert_eq!(status, StatusCode::OK);
    let tasks = v["tasks"].as_array().unwrap();
    assert!(!tasks.is_empty() && tasks.len() <= 50);
    let questions: Vec<&str> = v["questions"].as_array().unwrap().iter().map(|q| q["class"].as_str().unwrap()).collect();
    let expected: Vec<String> = default_classes().into_iter().map(|c| c.name).collect();
    assert_eq!(questions, expected);
    let keys = check_keys();
    let n_checks = tasks.iter().filter(|t| keys.contains_key(t["text"].as_str().unwrap())).count();
    assert_eq!(n_checks, 2);
    // same request, same batch
    let (_, again) = call_json(&s, "GET", "/api/tasks/next?annotator=a1&n=50", None).await;
    assert_eq!(again, v);

    let (status, _) = call_json(&s, "GET", "/api/tasks/next?n=5", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn label_submission_validation() {
    let dir = tempfile::tempdir().unwrap();
    let s = human_experiment(dir.path());
    let (_, v) = call_json(&s, "GET", "/api/tasks/next?annotator=a1&n=5", None).await;
    let task = v["tasks"].as_array().unwrap().iter().find(|t| t["doc_id"].as_str().unwrap().starts_with('d')).unwrap();
    let doc = task["doc_id"].as_str().unwrap().to_string();
    let full = answers(task["text"].as_str().unwrap(), &check_keys());

    // unknown document
    let rec = json!([{"doc_id": "nope", "annotator": "a1", "answers": full}]);
    assert_eq!(call(&s, "POST", "/api/labels", Some(rec)).await.0, StatusCode::CONFLICT);

    // a document outside the queue
    let outside = s.read().await.corpus().docs().iter().map(|d| d.id.clone()).find(|id| {
        !s.try_read().unwrap().state().queue.contains_key(id)
    });
    let rec = json!([{"doc_id": outside.unwrap(), "annotator": "a1", "answers": full}]);
    assert_eq!(call(&s, "POST", "/api/labels", Some(rec)).await.0, StatusCode::CONFLICT);

    // missing class answer and unknown field
    let mut partial = full.clone();
    partial.remove("job_offer");
    let rec = json!([{"doc_id": doc, "annotator": "a1", "answers": partial}]);
    let (status, body) = call_json(&s, "POST", "/api/labels", Some(rec)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["field"], "answers.job_offer");
    let rec = json!([{"doc_id": doc, "annotator": "a1", "answers": full, "extra": 1}]);
    let (status, body) = call_json(&s, "POST", "/api/labels", Some(rec)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["index"], 0);
    assert_eq!(call(&s, "POST", "/api/labels", Some(json!({"x": 1}))).await.0, StatusCode::BAD_REQUEST);

    // accepted, then idempotent, then conflicting
    let rec = json!([{"doc_id": doc, "annotator": "a1", "answers": full}]);
    let (status, body) = call_json(&s, "POST", "/api/labels", Some(rec.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"accepted": 1, "duplicates": 0}));
    let (status, body) = call_json(&s, "POST", "/api/labels", Some(rec)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"accepted": 0, "duplicates": 1}));
    let mut flipped = full.clone();
    let a = flipped.get_mut("lost_job").unwrap();
    *a = if *a == Answer::Yes { Answer::No } else { Answer::Yes };
    let rec = json!([{"doc_id": doc, "annotator": "a1", "answers": flipped}]);
    assert_eq!(call(&s, "POST", "/api/labels", Some(rec)).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn full_human_round_through_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let s = human_experiment(dir.path());
    let keys = check_keys();

    let (status, _) = call_json(&s, "POST", "/api/iterations/advance", None).await;
    assert_eq!(status, StatusCode::CONFLICT, "advance without any annotation");

    // a3 answers before a2; once a3 fails the checks, a2 is served everything
    for annotator in ["a1", "a3", "a2"] {
        loop {
            let (_, v) = call_json(&s, "GET", &format!("/api/tasks/next?annotator={annotator}&n=50"), None).await;
            let tasks = v["tasks"].as_array().unwrap().clone();
            if tasks.is_empty() {
                break;
            }
            let recs: Vec<Value> = tasks
                .iter()
                .map(|t| {
                    let mut a = answers(t["text"].as_str().unwrap(), &keys);
                    if annotator == "a3" {
                        // a careless annotator fails the checks
                        a.values_mut().for_each(|x| *x = Answer::Yes);
                    }
                    json!({"doc_id": t["doc_id"], "annotator": annotator, "answers": a})
                })
                .collect();
            let (status, _) = call_json(&s, "POST", "/api/labels", Some(Value::Array(recs))).await;
            assert_eq!(status, StatusCode::OK);
            if annotator != "a1" && annotator != "a2" {
                break;
            }
        }
    }
    let (_, session) = call_json(&s, "GET", "/api/session", None).await;
    assert_eq!(session["pending"], 0);
    let queued = session["queue"].as_u64().unwrap();

    let (status, round) = call_json(&s, "POST", "/api/iterations/advance", None).await;
    assert_eq!(status, StatusCode::OK, "{round}");
    assert_eq!(round["round"], 1);
    let (_, rounds) = call_json(&s, "GET", "/api/iterations", None).await;
    let rounds = rounds.as_array().unwrap();
    assert_eq!(rounds.len(), 2);
    let agg = &rounds[0]["aggregation"];
    assert_eq!(agg["failed_annotators"], json!(["a3"]));
    assert_eq!(agg["labels"].as_u64().unwrap(), 5 * queued);

    let (_, session) = call_json(&s, "GET", "/api/session", None).await;
    assert_eq!(session["phase"]["phase"], "labeling");
    assert!(session["classes"][0]["labeled"].as_u64().unwrap() > 0);

    // metrics are served byte-for-byte as persisted
    let (status, body) = call(&s, "GET", "/api/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    let file = std::fs::read(dir.path().join("metrics.json")).unwrap();
    assert_eq!(body, file);
}

#[tokio::test]
async fn submissions_are_rejected_between_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new("unused.jsonl");
    cfg.labeler = LabelerMode::Oracle;
    cfg.init_per_seed = 5;
    for c in &mut cfg.classes {
        c.oracle = c.seeds.clone();
    }
    let mut exp = Experiment::initialize_with(cfg, corpus(), dir.path()).unwrap();
    exp.advance().unwrap();
    let s: Shared = Arc::new(RwLock::new(exp));
    let rec = json!([{"doc_id": "d00000", "annotator": "a", "answers": answers("", &BTreeMap::new())}]);
    assert_eq!(call(&s, "POST", "/api/labels", Some(rec)).await.0, StatusCode::CONFLICT);
    let (_, v) = call_json(&s, "GET", "/api/tasks/next?annotator=a", None).await;
    assert!(v["tasks"].as_array().unwrap().is_empty());
    let _: AnnotationRecord = serde_json::from_value(json!({"doc_id": "x", "annotator": "y", "answers": {}})).unwrap();
}
