//! Synthetic corpus generation with exact ground truth, plus single-step
//! mutations used to probe the evolution metrics.

mod generate;
mod mutate;
mod spec;

use thiserror::Error;

pub use generate::{generate, role_corpus_spec, ForgedCorpus, GroundTruthLabel, TransitionTruth};
pub use mutate::{mutate_update, MutationKind};
pub use spec::{allocate, FixtureSpec, FIXTURE_SCHEMA};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForgeError {
    #[error("bad fixture spec: {0}")]
    BadSpec(String),
    #[error("fixture spec has no seed")]
    MissingSeed,
    #[error("infeasible fixture spec: {0}")]
    InfeasibleSpec(String),
    #[error("mutation {kind} does not apply: {reason}")]
    NotApplicable { kind: MutationKind, reason: String },
}
