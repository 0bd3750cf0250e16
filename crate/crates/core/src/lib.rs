//! Shallow-circuit decomposition of observables and importance-sampled
//! expectation estimation on simulated state vectors.
//!
//! An observable `H` is approximated by `sum_k U_k^H Lambda_k U_k` where each
//! `U_k` is a brick-layout circuit and `Lambda_k` is diagonal, so each term is
//! measurable with one circuit followed by a computational-basis readout.

pub mod bench;
pub mod bound;
pub mod circuit;
pub mod decompose;
pub mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod pauli;
pub mod rng;
pub mod workloads;

pub use circuit::{AnsatzSpec, Circuit, ParamVector};
pub use decompose::{greedy_decompose, reconstruct, resume_decompose, DecompTerm, Decomposition, OptimizerConfig};
pub use error::{Error, Result};
pub use linalg::{DenseOperator, DiagObservable, StateVector};
