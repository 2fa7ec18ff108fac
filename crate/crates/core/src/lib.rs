//! Coherent-state quantum process tomography (csQPT) of bosonic gates.
//!
//! The crate simulates Wigner-function measurements of coherent-state probes
//! sent through a cavity process, reconstructs a rank-limited Kraus
//! representation of that process by gradient descent on the CPTP manifold,
//! and analyzes the result (transfer matrices, fidelities, leakage, error
//! budgets).
//!
//! Module map:
//!
//! - [`fock`]: truncated Fock-space states and operators.
//! - [`channel`]: Kraus / Choi / superoperator representations and cavity decoherence.
//! - [`gates`]: binomial code and the SNAP-displacement logical X gate.
//! - [`basis`]: Gell-Mann operator bases and transfer matrices.
//! - [`tomography`]: probe and Wigner grids, measurement simulation, datasets.
//! - [`reconstruct`]: Stiefel-manifold Kraus reconstruction.
//! - [`metrics`]: fidelities, leakage, truncation sweeps, error budgets, decoder study.
//!
//! Vectorization convention (used everywhere): `vec(X)` stacks the columns of
//! `X`, so element `(a, b)` of a `d x d` matrix lands at index `a + d * b`.

pub mod basis;
pub mod channel;
pub mod error;
pub mod fock;
pub mod gates;
pub mod linalg;
pub mod metrics;
pub mod reconstruct;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for every operator in the crate.
pub type CMatrix = ndarray::Array2<C64>;
/// Dense complex vector.
pub type CVector = ndarray::Array1<C64>;
