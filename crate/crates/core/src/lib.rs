//! Dirac structures as explicit linear subspaces, their interconnection by
//! the bowtie product, and simulation of the resulting Lagrange-Dirac
//! systems as implicit differential-algebraic equations.
//!
//! The crate is layered bottom-up:
//!
//! * [`subspace`]: orthonormal-basis subspace algebra,
//! * [`dirac`]: pointwise Dirac structures (sum, bowtie, composition, push-forward),
//! * [`induced`]: structures induced on cotangent bundles by constraint distributions,
//! * [`lagrange`]: Lagrangians, forces and the implicit equations with multipliers,
//! * [`integrator`]: implicit one-step schemes with Newton iteration,
//! * [`systems`]: ready-made example systems,
//! * [`selftest`]: randomized property suites shared by the CLI and the tests.

pub mod dirac;
pub mod error;
pub mod induced;
pub mod integrator;
pub mod lagrange;
mod linalg;
pub mod par;
pub mod selftest;
pub mod subspace;
pub mod systems;

pub use error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
