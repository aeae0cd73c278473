//! Dense complex linear algebra for the small matrices used throughout the
//! crate (Hamiltonians, density matrices, Liouvillians up to 9×9).

mod eigen;
mod expm;
mod lu;
mod matrix;
mod svd;

pub use eigen::{eigendecompose, eigendecompose_with, EigOptions, EigResult, DEFAULT_DEFECT_TOL, MAX_EIG_DIM};
pub use expm::{expm, expm_apply};
pub use lu::{inverse, solve, Lu};
pub use matrix::{inner, kron, vec_norm, CMatrix, MAX_DIM};
pub use svd::{numerical_rank, singular_values};

pub(crate) use matrix::{I, ONE, ZERO};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {dim} exceeds supported maximum {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("matrix is numerically singular")]
    Singular,
    #[error("eigenvector matrix is defective")]
    Defective,
    #[error("non-finite entries")]
    NonFinite,
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
}
