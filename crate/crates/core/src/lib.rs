//! Location-tagged massive-MIMO CSI synthesis and attention-based localization.
//!
//! The crate generates frequency-domain channel snapshots from a geometric
//! multipath model with time-varying scatterers, packages them into
//! normalized datasets, and trains either a tied-weight self-attention
//! localizer or a plain MLP baseline on them, entirely on the CPU.

pub mod baseline;
pub mod channel;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod model;
pub mod numcore;
pub mod params;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use numcore::{grad_check, Gradients, NodeId, Tape, Tensor};
