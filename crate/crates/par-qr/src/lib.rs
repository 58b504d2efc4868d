//! Parallel QR of rectangular matrices on the BSP engine.
//!
//! [`rect_qr`] runs a binary reduction tree: tall inputs are row-partitioned
//! across disjoint processor subsets, subtree R factors are stacked and
//! refactorized, and the thin orthogonal factors recombine by parallel
//! products. Near-square inputs land in [`square_qr`], a panelized compact
//! reflector factorization that stands in for the slanted-panel scheme the
//! theory builds on: its contract (a valid metered QR) is the same, its
//! measured word traffic follows the unreplicated bound.
//!
//! [`householder_reconstruct`] recovers the compact `(U, T)` form of an
//! explicit orthonormal matrix through the sign-shifted LU route, so the
//! banded reductions can aggregate and apply orthogonal updates cheaply.

mod plan;
mod reconstruct;
mod rect;
mod square;

use bsp_engine::DistMatrix;

pub use plan::QrTreePlan;
pub use reconstruct::householder_reconstruct;
pub use rect::{rect_qr, RectQr};
pub use square::square_qr;

use std::fmt;

use bsp_engine::EngineError;
use dense_kernels::KernelError;
use par_matmul::MatmulError;

/// Distributed compact reflector factor: `Q = E - U T U1^T` with `U` lower
/// trapezoidal and `T` upper triangular.
#[derive(Debug, Clone)]
pub struct DistHouseholder {
    pub u: DistMatrix,
    pub t: DistMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QrError {
    /// Fewer rows than columns.
    Underdetermined { rows: usize, cols: usize },
    NoProcessors,
    /// Reflector reconstruction failed to reproduce the input.
    ReconstructionResidual { residual: f64, bound: f64 },
    Engine(EngineError),
    Kernel(KernelError),
    Matmul(MatmulError),
}

impl fmt::Display for QrError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Underdetermined { rows, cols } => {
                write!(f, "qr requires rows >= cols, got {rows}x{cols}")
            }
            Self::NoProcessors => write!(f, "empty processor set"),
            Self::ReconstructionResidual { residual, bound } => {
                write!(f, "householder reconstruction residual {residual:e} exceeds {bound:e}")
            }
            Self::Engine(e) => write!(f, "{e}"),
            Self::Kernel(e) => write!(f, "{e}"),
            Self::Matmul(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for QrError {}

impl From<EngineError> for QrError {
    fn from(e: EngineError) -> Self {
        Self::Engine(e)
    }
}

impl From<KernelError> for QrError {
    fn from(e: KernelError) -> Self {
        Self::Kernel(e)
    }
}

impl From<MatmulError> for QrError {
    fn from(e: MatmulError) -> Self {
        Self::Matmul(e)
    }
}
