//! Segment-level text classification trained from review-level labels.
//!
//! Reviews are bags of segments (sentences). A hierarchical model encodes
//! each segment with a CNN, classifies it with a softmax layer, and combines
//! the segment distributions into a review distribution through a weighted
//! average whose weights come from an attention layer over Bi-GRU contextualized
//! segment vectors. Three aggregation functions are provided: uniform average,
//! softmax attention, and sigmoid attention.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod diffcore;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod milnet;
pub mod training;

pub use error::{Error, Result};
