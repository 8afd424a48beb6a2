//! Semiclassical trace formulas for chains of coupled spin-j particles.
//!
//! The crate has two halves that validate each other. The quantum half
//! ([`quantum`], [`floquet`]) builds dense spin-chain Hamiltonians and Floquet
//! operators and diagonalizes them exactly. The classical half ([`classical`],
//! [`orbits`], [`semiclassics`]) integrates the coherent-state equations of
//! motion, locates periodic orbits, and assembles periodic-orbit sums for the
//! density of states and the eigenphase density. [`sk`] checks numerically
//! that the naive classical Hamiltonian absorbs the Solari-Kochetov phase.

pub mod chart;
pub mod classical;
pub mod cli;
pub mod context;
pub mod error;
pub mod floquet;
pub mod hamiltonian;
pub mod linalg;
pub mod orbits;
pub mod quantum;
pub mod semiclassics;
pub mod sk;

pub use context::ModelContext;
pub use error::SpinError;
pub use hamiltonian::{HamiltonianSpec, SpinComponent, Term};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = ndarray::Array2<C64>;
/// Dense complex vector.
pub type CVec = ndarray::Array1<C64>;
