//! Error types shared across the crate.

use thiserror::Error;

/// Errors from background-geometry evaluations and coordinate inversions.
#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    /// Radius outside the exterior domain of the operation.
    #[error("radius r = {r} outside domain ({constraint})")]
    Domain { r: f64, constraint: &'static str },
    /// The tortoise inversion did not converge within the iteration cap.
    #[error("tortoise inversion failed for r* = {x}: no convergence, last bracket [{lo}, {hi}]")]
    NonConvergence { x: f64, lo: f64, hi: f64 },
    /// A tolerance argument that must be positive was not.
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Errors from the angular (Legendre) layer.
#[derive(Debug, Clone, Error)]
pub enum ModesError {
    #[error("angular configuration rejected: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Errors from grid construction and the characteristic march.
#[derive(Debug, Clone, Error)]
pub enum EvolutionError {
    #[error("evolution configuration rejected: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Modes(#[from] ModesError),
    /// A non-finite value appeared while filling the lattice.
    #[error("non-finite field value at cell (u = {u}, v = {v}), angular node {node}")]
    NonFinite { u: f64, v: f64, node: usize },
    /// The fixed-point corrector failed to contract.
    #[error(
        "corrector non-contraction at cell (u = {u}, v = {v}): relative update {update:.3e} \
         on second pass; reduce the step h or the data amplitude epsilon"
    )]
    Stability { u: f64, v: f64, update: f64 },
}

/// Errors from diagnostics evaluations.
#[derive(Debug, Clone, Error)]
pub enum DiagnosticsError {
    #[error("requested slice or window out of range: {0}")]
    Range(String),
    #[error("diagnostics configuration rejected: {0}")]
    Config(String),
    #[error("bad input data for diagnostic: {0}")]
    Data(String),
    /// A measured shift sits below the resolvable floor.
    #[error("shift {value:.3e} below resolution floor {floor:.3e}")]
    Resolution { value: f64, floor: f64 },
}

/// Errors from run-configuration parsing and validation.
#[derive(Debug, Clone, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("invalid value for {key} at line {line}: {msg}")]
    BadValue { key: String, line: usize, msg: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
}
