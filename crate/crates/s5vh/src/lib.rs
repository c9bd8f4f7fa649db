//! Feature-level self-supervised video hashing.
//!
//! The crate trains a bidirectional selective state-space encoder over
//! pre-extracted frame features, maps embeddings to binary video codes,
//! generates semantic hash centers from cluster structure, and evaluates
//! Hamming-space retrieval, plus a scaling bench for inference cost. See the
//! runnable programs under `examples/` for one entry point per capability,
//! or the `s5vh` binary for the end-to-end pipeline.

pub mod bench;
pub mod centers;
pub mod config;
pub mod error;
pub mod hashing;
pub mod lbfgs;
pub mod losses;
pub mod manifest;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod ssm;
pub mod synth;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
