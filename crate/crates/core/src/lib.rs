//! Quasimorphisms along random walks on free groups.
//!
//! The crate evaluates quasimorphisms on `F_k` and `Z^d`, builds
//! quasi-biharmonic representatives with certified residuals, realizes the
//! boundary cocycle on infinite reduced words and runs the Monte Carlo
//! experiments for the central limit theorem and the law of the iterated
//! logarithm.
//!
//! Code that sums over a measure table is generic over [`Scalar`]; the
//! aliases below fix the two scalar types used in practice.

pub mod boundary;
pub mod error;
pub mod group;
pub mod harmonic;
pub mod measure;
pub mod montecarlo;
pub mod quasimorphism;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use group::{Alphabet, GroupElement, GroupKind, Letter};
pub use measure::{FiniteMeasure, Generation, Sampler};
pub use quasimorphism::{Cursor, Quasimorphism};
pub use scalar::{parse_rational, Rational, Scalar};

/// Floating point measure for large experiments.
pub type Measure = FiniteMeasure<f64>;
/// Exact rational measure for identities that must hold exactly.
pub type ExactMeasure = FiniteMeasure<Rational>;
