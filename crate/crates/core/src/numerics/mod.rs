//! Dense f64 arrays, a recorded-operation tape for reverse-mode gradients,
//! the AdamW optimizer and a finite-difference gradient checker.

pub mod gradcheck;
pub mod linalg;
pub mod optim;
pub mod rng;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use optim::AdamWState;
pub use tape::{Tape, Var, IGNORE_INDEX, MASK_BIAS};
pub use tensor::Tensor;
