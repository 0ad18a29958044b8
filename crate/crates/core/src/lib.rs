//! Retriever-free retrieval: a compressed full-text index traversed by a
//! corpus-constrained Monte Carlo tree search (CT-MCTS), with a pluggable
//! language-model policy, answer-containment value scoring, document
//! selection, a multi-step reasoning orchestrator, and an evaluation
//! harness.

pub mod corpus;
pub mod engine;
pub mod eval;
pub mod index;
pub mod mcts;
pub mod orchestrate;
pub mod policy;
pub mod remote;
pub mod select;
pub mod subject;
pub mod text;
pub mod token;
pub mod value;
