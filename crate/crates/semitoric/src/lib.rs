//! Numerical and exact tools for two-degree-of-freedom integrable systems:
//! singularity census, bifurcation diagrams, monodromy, the semitoric
//! invariants and desk-scale joint spectra.

pub mod dynamics;
pub mod fibration;
pub mod invariants;
pub mod models;
pub mod polygons;
pub mod quad;
pub mod quantum;
pub mod singularities;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("syntax error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integration failed at t = {t}: {msg}")]
    Integration {
        t: f64,
        msg: String,
        /// Accepted (time, state) pairs up to the failure.
        partial: Vec<(f64, Vec<f64>)>,
    },
    #[error("no return within the time budget: {0}")]
    NonCompactFiber(String),
    #[error("degenerate torus: {0}")]
    DegenerateTorus(String),
    #[error("value is not regular: {0}")]
    NotRegular(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("branch tracking failed: {0}")]
    BranchTracking(String),
    #[error("affine structure does not close: {0}")]
    AffineStructure(String),
    #[error("lattice tracking ambiguous: {msg}; try {suggested_steps} steps")]
    RefineStep { msg: String, suggested_steps: usize },
    #[error("transform breaks convexity at vertex {vertex}")]
    NonConvex { vertex: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("eigensolver: {0}")]
    EigenSolver(String),
}

impl Error {
    /// Process exit code: 2 configuration, 3 numerical, 4 precondition.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::UnknownIdentifier { .. } | Error::Config(_) => 2,
            Error::Precondition(_) | Error::NotRegular(_) | Error::Unsupported(_) => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPoint(_) => "invalid-point",
            Error::Parse { .. } => "parse",
            Error::UnknownIdentifier { .. } => "unknown-identifier",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Integration { .. } => "integration",
            Error::NonCompactFiber(_) => "non-compact-fiber",
            Error::DegenerateTorus(_) => "degenerate-torus",
            Error::NotRegular(_) => "not-regular",
            Error::Resolution(_) => "resolution",
            Error::Consistency(_) => "consistency",
            Error::BranchTracking(_) => "branch-tracking",
            Error::AffineStructure(_) => "affine-structure",
            Error::RefineStep { .. } => "refine-step",
            Error::NonConvex { .. } => "non-convex",
            Error::Unsupported(_) => "unsupported",
            Error::Precondition(_) => "precondition",
            Error::EigenSolver(_) => "eigensolver",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
