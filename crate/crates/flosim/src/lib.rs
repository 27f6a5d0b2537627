//! Phase-sensitive simulation of fermionic linear optics (FLO) augmented with
//! controlled-phase gates.
//!
//! The crate is organised around a phase-carrying classical description of
//! pure fermionic Gaussian states, `Γ = (ω, R, a, λ)`, which supports exact
//! global-phase tracking through passive, elementary and general FLO updates.
//! Controlled-phase gates are compiled away by a gadgetizing pass
//! ([`circuit::gadgetize`]) and recovered statistically by the Monte-Carlo
//! estimators in [`estimator`].
//!
//! Modules:
//! - [`numerics`]: Pfaffians, antisymmetric/orthogonal block diagonalisation,
//!   the symplectic condensed form. Generic over the scalar type.
//! - [`dense_oracle`]: brute-force statevector reference used by the tests.
//! - [`kak_phase`]: KAK decompositions and the Pfaffian-based phase recovery.
//! - [`gaussian_state`]: the Gaussian-state engine and its update rules.
//! - [`magic`]: controlled-phase magic states, FLO extent, branch sampling.
//! - [`circuit`]: circuit IR, text format, matchgate conversion, gadgetizer.
//! - [`estimator`]: Born-rule probability estimation (full and partial).

pub mod circuit;
pub mod cli;
pub mod dense_oracle;
pub mod estimator;
pub mod gaussian_state;
pub mod kak_phase;
pub mod magic;
pub mod numerics;

/// Scalar type used by the simulation engine.
pub type Real = f64;
/// Complex scalar built on [`Real`].
pub type Cplx = num_complex::Complex<Real>;

/// Matrix/vector aliases used throughout the engine.
pub type RMatrix = nalgebra::DMatrix<Real>;
pub type CMatrix = nalgebra::DMatrix<Cplx>;
pub type CVector = nalgebra::DVector<Cplx>;
