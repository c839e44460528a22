//! Spectral toolkit for quantum graphs: metric graphs carrying the free
//! Laplacian with matching conditions at the vertices.
//!
//! The library is organised around the scattering description of the
//! stationary states. A directed-edge amplitude vector evolves under the
//! unitary quantum map `U(k) = T(k) S`; eigenvalues are the positive roots
//! of `det(I - U(k))` and everything else is built on top of that:
//!
//! - [`graph`] — the metric-graph data model, vertex conditions and the
//!   directed-edge indexing conventions shared by all solvers.
//! - [`scattering`] — vertex scattering matrices, the global edge scattering
//!   matrix `S`, the transport matrix `T(k, alpha)`, the quantum map, the
//!   open-graph scattering matrix and the Wigner-Smith delay matrix.
//! - [`spectrum`] — secular function, wave-number spectrum with
//!   multiplicities, normalized real eigenfunctions and perfect-scar
//!   detection.
//! - [`dtn`] — the Dirichlet-to-Neumann hierarchy: per-edge coefficients,
//!   all-vertex matrix, Schur-complement reduction and the DtN secular
//!   equation (an independent route to the spectrum).
//! - [`orbits`] — the classical Markov map, periodic-orbit enumeration,
//!   exact trace identities and the trace formula.
//! - [`statistics`] — Weyl-law diagnostics, level-spacing samples and the
//!   spectral form factor (Monte Carlo, exact combinatorial, diagonal).
//! - [`nodal`] — nodal counts, nodal surplus and the magnetic-Hessian
//!   Morse-index verification.
//! - [`surgery`] — graph modifications (Dirichlet imposition, vertex
//!   splitting, coupling increase) with eigenvalue-interlacing checks.
//! - [`io`] — the JSON graph file format and CSV/JSON export helpers.
//!
//! All matrices are dense (`nalgebra`); channel counts stay small for the
//! intended workloads.

pub mod builders;
pub mod dtn;
pub mod graph;
pub mod io;
mod linalg;
pub mod nodal;
pub mod orbits;
pub mod scattering;
pub mod spectrum;
pub mod statistics;
pub mod surgery;

use thiserror::Error;

pub use graph::{
    Channel, DirectedEdges, Edge, EdgeId, EdgeKind, GraphBuilder, MetricGraph, ValidationReport,
    Vertex, VertexCondition, VertexId, Violation,
};

/// Complex scalar used throughout.
pub type Complex = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<Complex>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVector = nalgebra::DVector<f64>;

/// Errors shared by the solver modules.
///
/// Invariant violations of a [`MetricGraph`] are data (see
/// [`graph::validate_graph`]); they only become an [`Error`] when a solver
/// is handed an invalid graph.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(ValidationReport),
    #[error("operation requires a closed graph (no leads)")]
    ClosedGraphRequired,
    #[error("operation requires an open graph (at least one lead)")]
    OpenGraphRequired,
    #[error("delta vertex scattering matrix is singular at k = 0")]
    DeltaAtZeroWaveNumber,
    #[error("scattering matrix is k-dependent (delta vertex present); not supported here")]
    KDependentScattering,
    #[error("edge {edge}: k is a Dirichlet eigenvalue of the edge (sin(k l) = 0)")]
    EdgeDtnPole { edge: EdgeId },
    #[error("interior DtN block singular: k^2 is an eigenvalue of the interior-Dirichlet graph")]
    SingularInterior,
    #[error("residual {residual:.3e} at k = {k} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { k: f64, residual: f64, tol: f64 },
    #[error("non-generic eigenfunction: {0}")]
    NonGeneric(String),
    #[error("orbit enumeration budget of {budget} exceeded")]
    OrbitBudgetExceeded { budget: usize },
    #[error("magnetic continuation failed: {0}")]
    ContinuationFailed(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("incomplete spectra: {0}")]
    IncompleteSpectra(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
