//! Segment encoders (average embedding, CNN) and the Bi-GRU contextualizer.

mod average;
mod cnn;
mod gru;
mod init;

pub use average::encode_avg;
pub use cnn::{CnnConfig, CnnEncoder, Nonlinearity};
pub use gru::{BiGru, GruCell};
pub use init::{glorot, uniform};
