//! Reverse-mode differentiation over dense `f64` tensors, plus the Adadelta
//! optimizer and the parameter checkpoint format.

mod adadelta;
pub mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adadelta::{AdadeltaConfig, AdadeltaState};
pub use params::{Gradients, ParamId, ParamSet, Parameter};
pub use tape::{sigmoid, softmax_in_place, Mode, SparseRows, Tape, Var};
pub use tensor::{argmax, Tensor};


#[cfg(test)]
mod tests;
