//! Evidence-aware credibility assessment of textual claims.
//!
//! A claim is scored once per reporting article by a network that encodes
//! the article with a bidirectional LSTM, attends over its words with
//! respect to the claim, and fuses the result with learned embeddings of
//! the claim and article sources. Per-article scores are averaged into a
//! claim-level credibility.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
