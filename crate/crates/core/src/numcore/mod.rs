//! Dense tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Everything learnable in the crate runs through this module: forward
//! passes record onto a [`Tape`], `backward` produces exact adjoints, and
//! [`grad_check`] verifies them against central finite differences at
//! 64-bit precision.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
