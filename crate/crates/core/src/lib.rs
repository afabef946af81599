//! Instruction back-and-forth translation pipeline.
//!
//! Web documents are streamed and length-filtered ([`corpus`]), turned into
//! instruction/response pairs by a backward model, scored by a forward model
//! and optionally rewritten or distilled by an aligned model ([`stages`]),
//! assembled into tagged fine-tuning datasets ([`dataset`]) and compared with
//! distribution and diversity metrics ([`analysis`]). [`pipeline`] drives the
//! stages over a resumable append-only ledger.

pub mod analysis;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod gateway;
pub mod jsonl;
pub mod pipeline;
pub mod stages;

pub use error::{Error, Result};
