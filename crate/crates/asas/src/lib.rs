//! Joint answer selection and abstractive answer summarization.
//!
//! A question's candidate answers are encoded by a shared
//! compare-aggregate Bi-LSTM, summarized by a question-aware
//! pointer-generator decoder with coverage, and ranked by a two-way
//! co-attention classifier over question and summary representations.
//! One objective trains both tasks; parameter groups can be frozen for
//! transfer to corpora without reference summaries.

pub mod error;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;

pub mod training;

pub use error::{Error, Result};
