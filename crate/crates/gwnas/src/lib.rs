//! Budget-aware neural architecture search for microcontroller sensor nodes.
//!
//! Given an MCU deployment target and a time/energy budget for the machine
//! running the search (typically an IoT gateway), this crate generates a
//! cell-based CNN search space, crops it to fit the budget, explores it with
//! a derivative-free bi-level strategy, and trains candidates with a small
//! built-in fp32 engine. Everything is deterministic for a fixed seed.
//!
//! Start from [`archmodel::Architecture`] and [`spacegen::build_extensive_space`],
//! or run the `gwnas` binary; the `examples/` directory has one runnable
//! example per capability.

pub mod archmodel;
pub mod budget;
pub mod cli;
pub mod costmodel;
pub mod dataio;
pub mod nnengine;
pub mod rng;
pub mod searchcore;
pub mod spacegen;

pub use archmodel::{Architecture, InputShape, Topology};
pub use costmodel::{OverheadConfig, ResourceProfile};
pub use spacegen::{ConstraintSet, SearchSpace};
