//! Active-learning engine for retrieving extremely rare positive documents
//! from large text corpora.
//!
//! The crate is organised around the loop it drives:
//!
//! - [`corpus`]: ingestion, tokenization, inverted index, evaluation/sampling pools
//! - [`motif`]: seed motifs, matching, specificity/frequency, base rates
//! - [`skipgram`]: k-skip-n-gram enumeration, frequency index, lift mining
//! - [`scorer`]: the pluggable scorer contract and a built-in logistic scorer
//! - [`calibration`]: bootstrap logistic calibration and the 0.5 crossing score
//! - [`strategies`]: the five query policies
//! - [`evaluation`]: rank-schedule sampling, AP, predicted positives, diversity,
//!   bootstrap standard errors and convergence
//! - [`orchestrator`]: configuration, annotation aggregation, experiment state
//!   and the iteration driver
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Every parallel routine produces the same output for any thread count.

pub mod calibration;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod motif;
pub mod orchestrator;
pub mod par;
pub mod rng;
pub mod scorer;
pub mod skipgram;
pub mod strategies;
pub mod synthetic;

pub use error::{Error, Result};
