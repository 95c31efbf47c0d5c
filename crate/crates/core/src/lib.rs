//! Entropy-guided chunk scheduling for selective-scan workloads.
//!
//! The crate is organised around the pieces of a chunk scheduler and the
//! machinery used to check it:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`entropy`] | fixed-bin histograms, Shannon entropy, EMA smoothing, moments |
//! | [`policy`] | the entropy-to-chunk rule and the scheduler family |
//! | [`scan`] | a reference selective-SSM recurrence, whole or chunked, and synthetic data |
//! | [`fusion`] | utility-driven operator fusion planning (DP, greedy, exhaustive) |
//! | [`rotation`] | Walsh-Hadamard diagnostics, majorization and Sinkhorn fitting |
//! | [`workload`] | embedded measurement fixtures and latency arithmetic |
//!
//! Everything is a pure function of its inputs; random streams are always
//! seeded explicitly.

pub mod entropy;
pub mod error;
pub mod fusion;
pub mod policy;
pub mod rotation;
pub mod scan;
pub mod workload;

pub use error::{Error, Result};
