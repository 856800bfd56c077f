//! Agentopic: a multi-agent workflow for explainable topic modeling.
//!
//! The library is organized around the stages of the workflow:
//!
//! - [`corpus`] loads article datasets and runs the text preprocessing pipeline.
//! - [`gateway`] talks to a chat-completion/embedding provider, with live,
//!   record/replay, and mock backends, plus structured-output validation.
//! - [`vecstore`] stores embeddings and answers exact nearest-neighbor queries.
//! - [`agents`] implements the five agent behaviors: topic identification,
//!   topic review, grouping, group review, and hierarchy construction.
//! - [`hierarchy`] holds the topic-hierarchy data structure with validation,
//!   redundancy pruning, statistics, and structured/DOT exports.
//! - [`orchestrator`] drives the end-to-end state machine (seeded and
//!   generative runs) with bounded fix-errors loops, a trace, checkpoints,
//!   and dataset augmentation.
//! - [`evalkit`] scores seeded predictions with macro-averaged
//!   precision/recall/F1 and renders per-category report tables.

pub mod agents;
pub mod corpus;
pub mod evalkit;
pub mod gateway;
pub mod hierarchy;
pub mod orchestrator;
pub mod vecstore;
