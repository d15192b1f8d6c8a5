//! Raw annotations and their aggregation into labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::{Answer, AttentionCheck};
use crate::scorer::LabeledExample;

/// One annotator's answers for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub doc_id: String,
    pub annotator: String,
    pub answers: BTreeMap<String, Answer>,
}

/// Problem with one field of one submitted record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub index: usize,
    pub field: String,
    pub message: String,
}

/// Check that a record names a document and an annotator and answers
/// exactly the configured classes.
pub fn validate_record(index: usize, r: &AnnotationRecord, classes: &[String]) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let mut err = |field: &str, message: String| {
        errs.push(FieldError {
            index,
            field: field.to_string(),
            message,
        })
    };
    if r.doc_id.trim().is_empty() {
        err("doc_id", "must not be empty".into());
    }
    if r.annotator.trim().is_empty() {
        err("annotator", "must not be empty".into());
    }
    for c in classes {
        if !r.answers.contains_key(c) {
            err(&format!("answers.{c}"), "missing answer".into());
        }
    }
    for c in r.answers.keys() {
        if !classes.contains(c) {
            err(&format!("answers.{c}"), "unknown class".into());
        }
    }
    errs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unsure,
    Disagreement,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dropped {
    pub doc_id: String,
    pub class: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    /// Sorted by document then class.
    pub labels: Vec<LabeledExample>,
    /// Number of agreeing annotators behind each label, aligned with
    /// `labels`.
    pub support: Vec<u32>,
    pub dropped: Vec<Dropped>,
    pub failed_annotators: BTreeSet<String>,
}

impl Aggregation {
    pub fn count(&self, reason: DropReason) -> usize {
        self.dropped.iter().filter(|d| d.reason == reason).count()
    }
}

/// Attention checks keyed by the task id they are served under.
pub type AttentionKeys = BTreeMap<String, AttentionCheck>;

/// Annotators who answered any attention check wrongly.
pub fn failed_annotators(records: &[AnnotationRecord], attention: &AttentionKeys) -> BTreeSet<String> {
    let mut failed = BTreeSet::new();
    for r in records {
        if let Some(check) = attention.get(&r.doc_id) {
            let wrong = check
                .answers
                .iter()
                .any(|(class, want)| r.answers.get(class).is_some_and(|a| a != want));
            if wrong {
                failed.insert(r.annotator.clone());
            }
        }
    }
    failed
}

/// Turn raw answers into labels.
///
/// Annotators who answered any attention check wrongly are ignored
/// entirely. For each document and class, the answer given by at least
/// `agreement` annotators decides: yes is positive, no is negative, unsure
/// is dropped. Anything else is dropped as a disagreement, or as
/// insufficient when fewer than `agreement` annotators answered.
pub fn aggregate_annotations(
    records: &[AnnotationRecord],
    classes: &[String],
    agreement: usize,
    attention: &AttentionKeys,
) -> Aggregation {
    let failed = failed_annotators(records, attention);
    // first record per (doc, annotator)
    let mut by_doc: BTreeMap<&str, BTreeMap<&str, &AnnotationRecord>> = BTreeMap::new();
    for r in records {
        if attention.contains_key(&r.doc_id) || failed.contains(&r.annotator) {
            continue;
        }
        by_doc
            .entry(&r.doc_id)
            .or_default()
            .entry(&r.annotator)
            .or_insert(r);
    }
    let mut out = Aggregation {
        failed_annotators: failed,
        ..Aggregation::default()
    };
    for (doc, annotators) in by_doc {
        for class in classes {
            let answers: Vec<Answer> = annotators
                .values()
                .filter_map(|r| r.answers.get(class).copied())
                .collect();
            let count = |a: Answer| answers.iter().filter(|&&x| x == a).count();
            let winners: Vec<Answer> = [Answer::Yes, Answer::No, Answer::Unsure]
                .into_iter()
                .filter(|&a| count(a) >= agreement)
                .collect();
            let dropped = |reason| Dropped {
                doc_id: doc.to_string(),
                class: class.clone(),
                reason,
            };
            match winners.as_slice() {
                [Answer::Yes] | [Answer::No] => {
                    let label = winners[0] == Answer::Yes;
                    out.labels.push(LabeledExample {
                        doc_id: doc.to_string(),
                        class: class.clone(),
                        label,
                    });
                    out.support.push(count(winners[0]) as u32);
                }
                [Answer::Unsure] => out.dropped.push(dropped(DropReason::Unsure)),
                [] if answers.len() < agreement => out.dropped.push(dropped(DropReason::Insufficient)),
                _ => out.dropped.push(dropped(DropReason::Disagreement)),
            }
        }
    }
    out
}
