//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no connected graph of {n_vertices} vertices within {attempts} attempts (best giant component: {best_giant} vertices)")]
    RetriesExhausted {
        n_vertices: usize,
        attempts: u32,
        best_giant: usize,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("graph invariant violated: {0}")]
    InvariantViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} of size {size} exceeds budget {budget}")]
    BudgetExceeded {
        what: &'static str,
        size: usize,
        budget: usize,
    },

    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("polynomials share a root (|resultant| = {resultant:.3e}); Bezout identity unsolvable")]
    CommonRoot { resultant: f64 },

    #[error("degenerate polynomial input: {0}")]
    Degenerate(&'static str),

    #[error("H = H0'H0 + H1'H1 is not positive definite (lambda_min = {lambda_min:.3e})")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error("condition number is 1; {0}")]
    KappaOne(&'static str),

    #[error("local least-squares matrix at vertex {vertex} is singular")]
    LocalSingular { vertex: usize },

    #[error("iteration diverged at step {iteration}: update magnitude {magnitude:.3e}")]
    Diverged { iteration: usize, magnitude: f64 },

    #[error("contraction bound violated at m={iteration}, p={p}: error {error:.3e} > bound {bound:.3e}")]
    BoundViolated {
        iteration: usize,
        p: &'static str,
        error: f64,
        bound: f64,
    },

    #[error("reference signal is zero; SNR undefined")]
    ZeroReference,

    #[error("signal spec requires block labels but none were supplied")]
    MissingLabels,

    #[error("signal spec requires vertex coordinates but the graph has none")]
    MissingCoordinates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bank file error: {0}")]
    BankFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
