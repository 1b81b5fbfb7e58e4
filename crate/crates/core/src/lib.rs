//! Hypernym extraction from definition sentences.
//!
//! Candidate nouns are classified from the part-of-speech window around them
//! with a bidirectional GRU, then re-scored with lexical features and the
//! candidate's degree centrality in a hypernym co-occurrence graph.

pub mod baselines;
pub mod cograph;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod neural;
pub mod postag;
pub mod rng;

pub use error::{Error, Result};
