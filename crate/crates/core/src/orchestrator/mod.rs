//! Experiment configuration, state, annotation handling and the iteration loop.

pub mod annotation;
pub mod config;
pub mod engine;
pub mod state;

pub use annotation::{aggregate_annotations, AnnotationRecord, FieldError};
pub use config::{Answer, ClassConfig, ExperimentConfig, LabelerMode};
pub use engine::{Experiment, Session, SubmitOutcome, Task, TaskBatch};
pub use state::{ExperimentState, Phase, StateDir};
