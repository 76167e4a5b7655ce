use thiserror::Error;

/// Errors raised by the solver and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry at node {node}: {what}")]
    Degeneracy { node: usize, what: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("projection failed: {0}")]
    Projection(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("mesh tangling: det(grad eta) = {det:.3e} in cell {cell}")]
    MeshTangling { cell: usize, det: f64 },

    #[error("boundary is no longer a graph over the reference surface: {0}")]
    GraphViolation(String),

    #[error("boundary decomposition failed: {0}")]
    Decomposition(String),

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("Picard iteration: {0}")]
    Picard(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_check(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: length {got}, expected {want}")))
    }
}
