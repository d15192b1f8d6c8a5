//! Persisted experiment state.
//!
//! Everything is kept in ordered maps so that a snapshot written, read back
//! and written again is byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{AnnotationRecord, DropReason};
use crate::calibration::CalibrationReport;
use crate::evaluation::MetricsRecord;
use crate::motif::MotifStats;
use crate::scorer::LogisticModel;
use crate::skipgram::LiftEntry;
use crate::strategies::Strategy;
use crate::{Error, Result};

pub const STATE_VERSION: u32 = 1;

pub const STATE_FILE: &str = "state.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const BATCHES_FILE: &str = "batches.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase")]
pub enum Phase {
    /// Waiting for labels of round `round`.
    Labeling { round: u32 },
    /// Labels of every round up to the current iteration are in.
    Ready,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedState {
    pub motif: String,
    pub stats: Option<MotifStats>,
    pub retained: bool,
    pub matched: usize,
    pub sampled: usize,
}

/// A label in a training set, with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: bool,
    pub round: u32,
    pub support: u32,
}

/// Why a queued document is being labeled.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueItem {
    /// `(class, provenance)` for documents queried from the sampling pool.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query: Vec<(String, String)>,
    /// Classes whose evaluation sample holds the document.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eval: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub class: String,
    pub strategy: Strategy,
    pub doc_ids: Vec<String>,
    pub provenance: Vec<String>,
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub seed: u64,
    pub test_auroc: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationSummary {
    pub records: usize,
    pub labels: usize,
    pub positives: BTreeMap<String, usize>,
    pub unsure: usize,
    pub disagreement: usize,
    pub insufficient: usize,
    pub failed_annotators: Vec<String>,
}

impl AggregationSummary {
    pub(crate) fn set_drops(&mut self, reason: DropReason, n: usize) {
        match reason {
            DropReason::Unsure => self.unsure = n,
            DropReason::Disagreement => self.disagreement = n,
            DropReason::Insufficient => self.insufficient = n,
        }
    }
}

/// One labeling round. Round 0 is the seed sample; round `i + 1` holds the
/// queries made with the models of iteration `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub batches: Vec<BatchRecord>,
    pub eval_samples: BTreeMap<String, Vec<String>>,
    pub models: BTreeMap<String, ModelSummary>,
    pub calibration: BTreeMap<String, CalibrationReport>,
    pub grams: BTreeMap<String, Vec<LiftEntry>>,
    pub notes: BTreeMap<String, Vec<String>>,
    pub queued: usize,
    pub aggregation: Option<AggregationSummary>,
}

/// Model of the current iteration for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub iteration: u32,
    pub seed: u64,
    pub test_auroc: Option<f64>,
    pub model: LogisticModel,
}

/// Evaluation-pool ranks recorded when a model was scored, used once its
/// evaluation labels are in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingEval {
    pub iteration: u32,
    pub pool_size: usize,
    pub truncated: bool,
    pub ranks: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub version: u32,
    pub seed: u64,
    pub strategy: Strategy,
    pub classes: Vec<String>,
    pub corpus_size: usize,
    /// Index `i` of the newest labeled set `S_i` (or of the one being
    /// collected while labeling).
    pub iteration: u32,
    pub phase: Phase,
    pub seeds: BTreeMap<String, Vec<SeedState>>,
    pub labeled: BTreeMap<String, BTreeMap<String, LabelEntry>>,
    /// Evaluation-pool labels. Every evaluation document is labeled for
    /// all classes.
    pub eval_labels: BTreeMap<String, BTreeMap<String, bool>>,
    /// Evaluation documents drawn by each class's rank schedule.
    pub eval_pool: BTreeMap<String, BTreeSet<String>>,
    pub queue: BTreeMap<String, QueueItem>,
    /// Attention-check task ids of the open round, mapped to the check.
    pub attention: BTreeMap<String, usize>,
    /// Raw records of the open round. Earlier rounds live in the event log.
    pub annotations: Vec<AnnotationRecord>,
    /// Every document ever queried from the sampling pool.
    pub queried: BTreeSet<String>,
    pub rounds: Vec<RoundRecord>,
    pub metrics: Vec<MetricsRecord>,
    pub used_grams: BTreeMap<String, Vec<Vec<Vec<String>>>>,
    pub models: BTreeMap<String, ModelSnapshot>,
    pub pending_eval: BTreeMap<String, PendingEval>,
}

impl ExperimentState {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ExperimentState = serde_json::from_str(text)?;
        if s.version != STATE_VERSION {
            return Err(Error::State(format!(
                "state version {} is not supported (expected {STATE_VERSION})",
                s.version
            )));
        }
        Ok(s)
    }

    /// Metrics history for one class, oldest first.
    pub fn class_metrics(&self, class: &str) -> Vec<&MetricsRecord> {
        self.metrics.iter().filter(|m| m.class == class).collect()
    }

    pub fn metrics_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.metrics)?;
        s.push('\n');
        Ok(s)
    }
}

/// Files of one experiment directory.
#[derive(Debug, Clone)]
pub struct StateDir {
    root: PathBuf,
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StateDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self) -> bool {
        self.path(STATE_FILE).exists()
    }

    fn write_atomic(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, contents)?;
        fs::rename(tmp, self.path(name))?;
        Ok(())
    }

    pub fn save_state(&self, state: &ExperimentState) -> Result<()> {
        self.write_atomic(STATE_FILE, &state.to_json()?)?;
        self.write_atomic(METRICS_FILE, &state.metrics_json()?)
    }

    pub fn load_state(&self) -> Result<ExperimentState> {
        let text = fs::read_to_string(self.path(STATE_FILE))?;
        ExperimentState::from_json(&text)
    }

    pub fn save_config(&self, text: &str) -> Result<()> {
        self.write_atomic(CONFIG_FILE, text)
    }

    pub fn append_lines(&self, name: &str, lines: &[String]) -> Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        fs::create_dir_all(&self.root)?;
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(name))?;
        for l in lines {
            writeln!(f, "{l}")?;
        }
        f.sync_data()?;
        Ok(())
    }
}
