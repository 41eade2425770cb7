//! Case law grounding (CLG).
//!
//! Decisions on socially-contextual tasks (comment moderation, toxicity
//! rating) are grounded in a group's own past decisions: similar past cases
//! are retrieved by embedding similarity, an agent (human or LLM) marks each
//! candidate as a precedent or not, and the final decision is synthesized
//! deterministically from the golds of the selected precedents.
//!
//! Module map:
//!
//! * [`corpus`]: case corpora, controversy sampling, precedent/evaluation split.
//! * [`embedding`]: embedding providers, on-disk cache, cosine similarity.
//! * [`retrieval`]: exact top-k precedent retrieval and window restriction.
//! * [`synthesis`]: mode-with-nearest-tie-break synthesis, KNN and ORACLE.
//! * [`agents`]: prompt templates, LLM case/rule agents, mock strategies.
//! * [`evaluation`]: accuracy, paired t-test, Fleiss kappa, k-sweep reports.
//! * [`service`]: HTTP annotation backend (feature `service`).
//! * [`pipeline`]: workdir-based orchestration used by the `clg` binary.

pub mod agents;
pub mod config;
pub mod corpus;
pub mod decision;
pub mod embedding;
pub mod evaluation;
pub mod jsonl;
pub mod pipeline;
pub mod retrieval;
#[cfg(feature = "service")]
pub mod service;
pub mod synthesis;
pub mod synthetic;

pub use decision::{BinaryDecision, Decision, Domain};
