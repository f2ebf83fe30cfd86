//! Numerical toolkit for mean-field and Bogoliubov dynamics of the cutoff
//! Nelson model: periodic pseudo-spectral grids, coupled
//! Schrödinger–Klein–Gordon flows, dressing transformations, quadratic
//! (Bogoliubov) generators evolved at matrix level, renormalization
//! constants, and an exact truncated Fock-space oracle for small particle
//! numbers.

pub mod bogoliubov;
pub mod error;
pub mod export;
pub mod fock;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod meanfield;
pub mod random;
pub mod renorm;
pub mod scalar;

pub use error::CoreError;
pub use meanfield::{FlowSpec, MeanFieldState, Trajectory};
pub use grid::{Grid, MomentumField, SpatialField};
pub use kernels::{Cutoff, KernelSet};

pub use scalar::Scalar;

/// Default scalar type used by the CLI and the acceptance suite.
pub type Real = f64;
/// Complex number over [`Real`].
pub type C64 = num_complex::Complex<f64>;
/// Complex number over an arbitrary scalar.
pub type Cplx<S> = num_complex::Complex<S>;
