//! # biogen — one-sentence biographies from slot-value facts
//!
//! This crate maps structured facts about a person (slot-value pairs such as
//! `OCCUPATION squash player`) to a one-sentence textual summary. It contains
//! everything needed to run the task end to end on a single machine:
//!
//! - [`corpus`] — tokenization, fact linearization, dataset filtering and
//!   splitting, title delexicalization with copy tokens, and the shared
//!   vocabulary.
//! - [`template`] — a deterministic template baseline with slot back-offs,
//!   determiner agreement and tense selection.
//! - [`ngram`] — an interpolated modified Kneser-Ney n-gram language model
//!   and perplexity evaluation over templated corpora.
//! - [`model`] — a from-scratch differentiable seq2seq network: tied
//!   embeddings, stacked GRU encoder/decoder, additive attention, greedy
//!   decoding, and an autoencoding reconstruction objective trained with
//!   minibatch SGD. Forward and backward passes are hand-written; no
//!   autodiff framework is involved.
//! - [`eval`] — BLEU with bootstrap confidence intervals, fact-level
//!   content-selection and hallucination scoring, fact-count breakdowns,
//!   and preference-vote statistics.
//! - [`synth`] — deterministic synthetic corpora used by the examples and
//!   the test suite.
//! - [`commands`] — the pipeline commands behind the `biogen` binary.
//!
//! The `examples/` directory holds one runnable program per capability; start
//! with `cargo run --release --example pipeline` for the whole flow on a
//! synthetic corpus.

pub mod commands;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod ngram;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
