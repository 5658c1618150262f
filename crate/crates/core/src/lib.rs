//! Representation-locality Lieb-Robinson bounds for matrices without tensor
//! structure: locality certificates on a basis labeling, exact propagators
//! and bound audits, and adiabatic-error diagnostics.

// `!(x > 0.0)` is used deliberately so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod basis_blocks;
pub mod error;
pub mod experiment;
pub mod hamiltonian_model;
pub mod locality;
pub mod numerics;
pub mod plot;
pub mod propagation;

pub use basis_blocks::{Block, BlockDecomposition, Label, Permutation, ReorderStrategy};
pub use error::{ErrorKind, LabError, Result};
pub use hamiltonian_model::TimeDependentHamiltonian;
pub use locality::LocalityCertificate;
pub use numerics::{CMatrix, CVector, EigenSystem, TimeGrid};
pub use propagation::Propagator;
