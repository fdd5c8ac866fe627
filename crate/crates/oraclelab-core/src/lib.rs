//! Exact desk-scale simulation of the compressed quantum random oracle, the
//! extractable random-oracle simulator built on top of it, and two
//! applications: online extraction for commit-and-open Σ-protocols and
//! extraction-based decapsulation for the Fujisaki-Okamoto KEM.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, timing and the command line live in the
//! companion `oraclelab` crate.
//!
//! Module map:
//! - [`linalg`]: labeled multi-register spaces, dense operators, norms.
//! - [`oracle`]: the unitaries `F` and `O_XYD`, dense oracle state,
//!   classical queries and classical reference oracles.
//! - [`circuit`]: declarative adversary circuits and their exact execution.
//! - [`relation`], [`extraction`], [`simulator`]: relations, commit
//!   functions, extraction measurements and the simulator `S`.
//! - [`sparse`]: the sparse database backend.
//! - [`bounds`]: the bound-verification experiments.
//! - [`sigma`], [`fo`]: the two applications.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backend;
pub mod bounds;
pub mod circuit;
pub mod coins;
pub mod error;
pub mod extraction;
pub mod fo;
pub mod linalg;
pub mod oracle;
pub mod relation;
pub mod rng;
pub mod sigma;
pub mod simulator;
pub mod sparse;

pub use error::{Error, Result};
pub use linalg::{C64, TOLERANCE};
