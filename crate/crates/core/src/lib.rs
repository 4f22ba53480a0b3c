//! Spectral laboratory for the sum-difference convex-integration construction
//! of non-unique weak solutions to forced active scalar equations with even
//! drift operators on the two-dimensional torus.
//!
//! The crate is organised around the stages of the construction:
//!
//! * [`grid`], [`field`], [`fft`] — periodic fields on `[0, 2π)²` and the
//!   discrete Fourier engine;
//! * [`spectral`] — derivatives, fractional dissipation, Littlewood–Paley
//!   projections, divergence inversion and dealiased products;
//! * [`norms`] — `C⁰`/`C^k` norms and Hölder seminorm estimation;
//! * [`symbols`] — even, degree-zero, divergence-free drift multipliers and
//!   the two-direction frame used to decompose stress vectors;
//! * [`transport`] — coarse-scale flow maps, phase transport and the
//!   flow-adapted mollification of stresses;
//! * [`microlocal`] — principal-term extraction for multipliers acting on
//!   plane-wave packets, with measured residual scaling;
//! * [`increment`] — time cutoffs, lifting function, amplitudes and the
//!   oscillatory correction;
//! * [`iteration`] — the two-step sum-difference iteration engine with full
//!   error-term assembly and inductive-bound verification;
//! * [`regime`] — exact-rational evaluation of the admissible exponent
//!   regions;
//! * [`config`], [`io`] — run configuration and field checkpoints.

pub mod config;
pub mod fft;
pub mod field;
pub mod grid;
pub mod increment;
pub mod io;
pub mod iteration;
pub mod microlocal;
pub mod norms;
pub mod regime;
pub mod spectral;
pub mod symbols;
pub mod transport;

pub use field::{ComplexField, ScalarField, ScalarSlab, VectorField, VectorSlab};
pub use grid::GridSpec;
pub use symbols::{SymbolFrame, SymbolSpec};

/// Errors shared across the field pipeline.
#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fractional Laplacian order must be non-negative, got {0}")]
    NegativeOrder(f64),
    #[error("input is not mean-zero: |mean| = {mean:.3e} exceeds {limit:.3e}")]
    NonZeroMean { mean: f64, limit: f64 },
    #[error("frequency content exceeds the grid Nyquist limit: {0}")]
    NyquistViolation(String),
    #[error("mollification scale under-resolved: {0}")]
    UnderResolved(String),
    #[error("time {0} outside the slab window")]
    OutOfWindow(f64),
    #[error("phase deformation bound exceeded: max |∇ξ−∇ξ̂| = {measured:.3e} > {limit:.3e}")]
    DeformationExceeded { measured: f64, limit: f64 },
    #[error("no linearly independent frame in the even-part image of the symbol")]
    NoFrame,
    #[error("time window too short for the requested cutoff scale: {0}")]
    WindowTooShort(String),
    #[error("lifting function infeasible: {0}")]
    LiftingInfeasible(String),
    #[error("negative radicand in amplitude construction: min = {0:.3e}")]
    NegativeRadicand(f64),
    #[error("parameter schedule infeasible: {0}")]
    ScheduleInfeasible(String),
    #[error("assembled error terms do not close against the direct residual: {0}")]
    ClosureFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, FieldError>;
