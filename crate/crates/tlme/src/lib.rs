//! Time-local master equation solver for a driven two-level system coupled
//! to a bosonic bath.
//!
//! The library builds the constant relaxation superoperators `S^(k)_l`
//! (antiderivative order `k`, contraction order `l`) of the memory kernel,
//! assembles time-local generators for the Born-Markov, Born-only and full
//! schemes, and propagates the qubit density matrix through a
//! prepare/pulse/decay protocol. Distances between the resulting
//! trajectories quantify memory effects and the error made by truncating
//! initial correlations.
//!
//! All energies are measured in units of the qubit splitting, which is
//! fixed to one internally.

pub mod analysis;
pub mod bath;
pub mod config;
pub mod diagrams;
pub mod evolve;
pub mod generator;
pub mod jets;
pub mod kernel;
pub mod linalg;
pub mod quad;
pub mod terms;

pub use bath::{BathSpec, Branch};
pub use evolve::{DensityMatrix, PulseProtocol, Trajectory};
pub use generator::{Generator, Scheme};
pub use diagrams::{Diagram, STable, Vertex};
pub use linalg::{Mat2, Mat4, Vec4, C64};

/// Qubit energy splitting in internal units.
pub const DELTA_E: f64 = 1.0;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("quadrature residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureResidual { residual: f64, tol: f64 },
    #[error("fixed point not converged: residual {residual:.3e} after {iters} iterations")]
    NotConverged { residual: f64, iters: usize },
    #[error("steady state is not unique")]
    DegenerateSteadyState,
    #[error("state invariant violated: {0}")]
    StateInvariant(String),
    #[error("unsupported order: k={k}, l={l}")]
    UnsupportedOrder { k: usize, l: usize },
    #[error("diagram group failed the pairing symmetry check: {0}")]
    GroupSymmetry(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
