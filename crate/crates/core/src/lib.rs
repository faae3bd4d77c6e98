//! Driven, damped Tavis–Cummings model.
//!
//! `n_at` identical two-level atoms in the symmetric Dicke sector couple to one
//! driven cavity mode. Everything is expressed in the interaction picture with
//! ħ = κ = 1, so rates and energies are in units of the cavity decay rate.
//!
//! Basis states are enumerated atom-major: index = (s + m_s)·(n_max + 1) + n_ph.

// `!(x > 0.0)` is used on purpose so that NaN fails validation, and the
// index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod ladders;
pub mod linalg;
pub mod liouville;
pub mod meanfield;
pub mod model;
pub mod par;
pub mod spectra;
pub mod trajectories;

pub use error::{Error, Result};
pub use model::{
    build_space, collective_ops, interaction_hamiltonian, lindblad_rhs, CollectiveOps,
    DensityMatrix, HilbertSpace, ModelParams, OperatorMatrix, StateVector,
};
pub use num_complex::Complex64 as C64;
pub use par::Exec;

/// Library version string recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
