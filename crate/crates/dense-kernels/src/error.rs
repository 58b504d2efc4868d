use std::fmt;

/// Errors raised by the sequential kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    /// Inner dimensions of a product do not match.
    DimMismatch {
        ctx: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// QR factorization needs at least as many rows as columns.
    Underdetermined { rows: usize, cols: usize },
    /// A pivot fell below the breakdown tolerance during elimination.
    SingularPivot { index: usize, pivot: f64 },
    /// An iterative eigenvalue sweep did not converge within its cap.
    NoConvergence { iterations: usize },
    /// Input matrix is not symmetric within the required tolerance.
    NotSymmetric { max_deviation: f64 },
    /// Generic shape violation (non-square input, bad array lengths, ...).
    BadShape { ctx: &'static str },
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimMismatch { ctx, lhs, rhs } => write!(
                f,
                "{ctx}: dimension mismatch {}x{} vs {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Self::Underdetermined { rows, cols } => {
                write!(f, "qr requires rows >= cols, got {rows}x{cols}")
            }
            Self::SingularPivot { index, pivot } => {
                write!(f, "zero pivot at index {index} (value {pivot:e})")
            }
            Self::NoConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
            Self::NotSymmetric { max_deviation } => {
                write!(f, "matrix not symmetric (max deviation {max_deviation:e})")
            }
            Self::BadShape { ctx } => write!(f, "{ctx}"),
        }
    }
}

impl std::error::Error for KernelError {}
