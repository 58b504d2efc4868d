use std::fmt;

use bsp_engine::EngineError;
use dense_kernels::KernelError;
use par_matmul::MatmulError;
use par_qr::QrError;

#[derive(Debug, Clone, PartialEq)]
pub enum ReductionError {
    /// A divisibility or range precondition on (n, b, k, p) failed.
    BadGeometry { ctx: String },
    /// Input symmetry deviation beyond tolerance.
    NotSymmetric { max_deviation: f64 },
    /// Entries left outside the target band exceed the truncation budget.
    OutOfBandResidual { residual: f64, bound: f64 },
    Engine(EngineError),
    Kernel(KernelError),
    Matmul(MatmulError),
    Qr(QrError),
}

impl fmt::Display for ReductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadGeometry { ctx } => write!(f, "{ctx}"),
            Self::NotSymmetric { max_deviation } => {
                write!(f, "matrix not symmetric (max deviation {max_deviation:e})")
            }
            Self::OutOfBandResidual { residual, bound } => {
                write!(f, "out-of-band residual {residual:e} exceeds {bound:e}")
            }
            Self::Engine(e) => write!(f, "{e}"),
            Self::Kernel(e) => write!(f, "{e}"),
            Self::Matmul(e) => write!(f, "{e}"),
            Self::Qr(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ReductionError {}

impl From<EngineError> for ReductionError {
    fn from(e: EngineError) -> Self {
        Self::Engine(e)
    }
}

impl From<KernelError> for ReductionError {
    fn from(e: KernelError) -> Self {
        Self::Kernel(e)
    }
}

impl From<MatmulError> for ReductionError {
    fn from(e: MatmulError) -> Self {
        Self::Matmul(e)
    }
}

impl From<QrError> for ReductionError {
    fn from(e: QrError) -> Self {
        Self::Qr(e)
    }
}
