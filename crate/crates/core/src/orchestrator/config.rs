//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::{Crossing, MetricsOptions, RankSchedule};
use crate::motif::Motif;
use crate::scorer::{IrlsOptions, ScorerConfig};
use crate::strategies::{ExploitExploreConfig, Strategy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerMode {
    #[default]
    Human,
    Oracle,
}

/// Which earlier explore grams are off limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionWindow {
    /// Grams used at the previous iteration only.
    #[default]
    Previous,
    /// Grams used at any earlier iteration.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub name: String,
    pub question: String,
    /// Seed motifs in table notation.
    #[serde(default)]
    pub seeds: Vec<String>,
    /// Oracle rules: positive when any motif matches.
    #[serde(default)]
    pub oracle: Vec<String>,
}

impl ClassConfig {
    pub fn seed_motifs(&self) -> Result<Vec<Motif>> {
        self.seeds.iter().map(|s| Motif::parse(s)).collect()
    }

    pub fn oracle_motifs(&self) -> Result<Vec<Motif>> {
        self.oracle.iter().map(|s| Motif::parse(s)).collect()
    }
}

fn class(name: &str, question: &str, seeds: &[&str]) -> ClassConfig {
    ClassConfig {
        name: name.into(),
        question: question.into(),
        seeds: seeds.iter().map(|s| s.to_string()).collect(),
        oracle: Vec::new(),
    }
}

/// The five employment classes with their English seed motifs.
pub fn default_classes() -> Vec<ClassConfig> {
    vec![
        class(
            "lost_job",
            "Does the author say they lost their job in the past month?",
            &["(i, fired)", "i got fired", "just got fired", "laid off", "lost my job"],
        ),
        class(
            "is_hired",
            "Does the author say they were hired in the past month?",
            &["(found, job)", "(just, hired)", "i got hired", "(got, job)", "new job"],
        ),
        class(
            "is_unemployed",
            "Does the author say they are unemployed right now?",
            &["(i, unemployed)", "unemployed", "(i, jobless)", "jobless", "unemployment"],
        ),
        class(
            "job_search",
            "Does the author say they are looking for a job right now?",
            &[
                "(anyone, hiring)",
                "(wish, job)",
                "(need, job)",
                "(searching, job)",
                "(looking, gig)",
                "(applying, position)",
                "(find, job)",
            ],
        ),
        class(
            "job_offer",
            "Does the text offer a job?",
            &["job", "hiring", "opportunity", "apply"],
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionCheck {
    pub text: String,
    /// Required answer per class. Classes missing here are not checked.
    pub answers: BTreeMap<String, Answer>,
}

fn default_attention_checks() -> Vec<AttentionCheck> {
    let key = |yes: &[&str]| -> BTreeMap<String, Answer> {
        ["lost_job", "is_hired", "is_unemployed", "job_search", "job_offer"]
            .iter()
            .map(|c| {
                let a = if yes.contains(c) { Answer::Yes } else { Answer::No };
                (c.to_string(), a)
            })
            .collect()
    };
    vec![
        AttentionCheck {
            text: "I lost my job today".into(),
            answers: key(&["lost_job", "is_unemployed"]),
        },
        AttentionCheck {
            text: "I got hired today".into(),
            answers: key(&["is_hired"]),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanConfig {
    /// Matching answers needed to accept a label.
    pub agreement: usize,
    pub attention_checks: Vec<AttentionCheck>,
}

impl Default for HumanConfig {
    fn default() -> Self {
        HumanConfig {
            agreement: 2,
            attention_checks: default_attention_checks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub n_seeds: usize,
    pub subsample: f64,
    pub train_frac: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Directory of external score files named `<class>_<iteration>.csv`,
    /// covering both pools. The built-in scorer is used when unset.
    pub external_scores: Option<PathBuf>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        let irls = IrlsOptions::default();
        ScorerSection {
            n_seeds: 15,
            subsample: 0.9,
            train_frac: 0.7,
            l2: irls.l2,
            max_iter: irls.max_iter,
            tol: irls.tol,
            external_scores: None,
        }
    }
}

impl ScorerSection {
    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            n_seeds: self.n_seeds,
            subsample: self.subsample,
            irls: IrlsOptions {
                l2: self.l2,
                max_iter: self.max_iter,
                tol: self.tol,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub bootstrap: usize,
    pub tol: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            bootstrap: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hashed { dim: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Rank intervals; the sixteen default groups when unset.
    pub schedule: Option<RankSchedule>,
    pub bins: usize,
    pub bootstrap: usize,
    pub crossing: Crossing,
    pub window: usize,
    pub alpha: f64,
    pub embedding: EmbeddingConfig,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let m = MetricsOptions::default();
        EvaluationSection {
            schedule: None,
            bins: m.bins,
            bootstrap: m.bootstrap,
            crossing: m.crossing,
            window: m.window,
            alpha: m.alpha,
            embedding: EmbeddingConfig::Hashed { dim: 256 },
        }
    }
}

impl EvaluationSection {
    pub fn schedule(&self) -> RankSchedule {
        self.schedule.clone().unwrap_or_else(RankSchedule::standard)
    }

    pub fn metrics_options(&self) -> MetricsOptions {
        MetricsOptions {
            bins: self.bins,
            bootstrap: self.bootstrap,
            crossing: self.crossing,
            window: self.window,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploitExploreSection {
    pub n_exploit: usize,
    pub top_size: usize,
    pub k_per_n: usize,
    pub per_gram: usize,
    pub min_freq: f64,
    pub vocab_file: Option<PathBuf>,
    pub exclusion_window: ExclusionWindow,
}

impl Default for ExploitExploreSection {
    fn default() -> Self {
        let d = ExploitExploreConfig::default();
        ExploitExploreSection {
            n_exploit: d.n_exploit,
            top_size: d.top_size,
            k_per_n: d.k_per_n,
            per_gram: d.per_gram,
            min_freq: 1e-5,
            vocab_file: None,
            exclusion_window: ExclusionWindow::Previous,
        }
    }
}

impl ExploitExploreSection {
    pub fn strategy_config(&self) -> ExploitExploreConfig {
        ExploitExploreConfig {
            n_exploit: self.n_exploit,
            top_size: self.top_size,
            k_per_n: self.k_per_n,
            per_gram: self.per_gram,
        }
    }
}

fn default_ratio() -> f64 {
    0.5
}
fn default_batch() -> usize {
    100
}
fn default_init() -> usize {
    150
}
fn default_seed() -> u64 {
    42
}
fn default_stats_sample() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_init")]
    pub init_per_seed: usize,
    /// Sample size for seed specificity estimates.
    #[serde(default = "default_stats_sample")]
    pub stats_sample: usize,
    /// Drop seeds failing the retention rule at initialization.
    #[serde(default)]
    pub filter_seeds: bool,
    #[serde(default)]
    pub labeler: LabelerMode,
    /// Extra seeds in the JSON-lines seed format.
    #[serde(default)]
    pub seeds_file: Option<PathBuf>,
    #[serde(default = "default_classes")]
    pub classes: Vec<ClassConfig>,
    #[serde(default)]
    pub scorer: ScorerSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub exploit_explore: ExploitExploreSection,
    #[serde(default)]
    pub human: HumanConfig,
}

impl ExperimentConfig {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            corpus: corpus.into(),
            seed: default_seed(),
            split_ratio: default_ratio(),
            strategy: Strategy::default(),
            batch_size: default_batch(),
            init_per_seed: default_init(),
            stats_sample: default_stats_sample(),
            filter_seeds: false,
            labeler: LabelerMode::default(),
            seeds_file: None,
            classes: default_classes(),
            scorer: ScorerSection::default(),
            calibration: CalibrationSection::default(),
            evaluation: EvaluationSection::default(),
            exploit_explore: ExploitExploreSection::default(),
            human: HumanConfig::default(),
        }
    }

    /// Parse TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = std::path::absolute(path)?;
        Self::from_toml(&text, base.parent())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        if let Some(p) = &mut self.seeds_file {
            fix(p);
        }
        if let Some(p) = &mut self.scorer.external_scores {
            fix(p);
        }
        if let Some(p) = &mut self.exploit_explore.vocab_file {
            fix(p);
        }
        if let EmbeddingConfig::File { path } = &mut self.evaluation.embedding {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must be in (0, 1), got {}", self.split_ratio));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !names.insert(&c.name) {
                return bad(format!("duplicate class {:?}", c.name));
            }
            c.seed_motifs()?;
            let oracle = c.oracle_motifs()?;
            if self.labeler == LabelerMode::Oracle && oracle.is_empty() {
                return bad(format!("class {:?} has no oracle rules", c.name));
            }
        }
        if self.scorer.n_seeds == 0 {
            return bad("scorer.n_seeds must be at least 1".into());
        }
        if !(self.scorer.train_frac > 0.0 && self.scorer.train_frac < 1.0) {
            return bad("scorer.train_frac must be in (0, 1)".into());
        }
        if !(self.scorer.subsample > 0.0 && self.scorer.subsample <= 1.0) {
            return bad("scorer.subsample must be in (0, 1]".into());
        }
        if self.evaluation.bins == 0 || self.evaluation.bootstrap < 2 {
            return bad("evaluation.bins must be >= 1 and evaluation.bootstrap >= 2".into());
        }
        if self.calibration.bootstrap == 0 {
            return bad("calibration.bootstrap must be at least 1".into());
        }
        if self.human.agreement == 0 {
            return bad("human.agreement must be at least 1".into());
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}
