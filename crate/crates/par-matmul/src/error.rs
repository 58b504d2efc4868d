use std::fmt;

use bsp_engine::EngineError;
use dense_kernels::KernelError;

#[derive(Debug, Clone, PartialEq)]
pub enum MatmulError {
    /// Inner dimensions do not match.
    DimMismatch { lhs: (usize, usize), rhs: (usize, usize) },
    /// The processor set is empty.
    NoProcessors,
    /// The grid-refinement parameter must be at least one.
    BadRefinement { v: f64 },
    /// Pass count outside `[1, q]`.
    BadPassCount { w: usize, q: usize },
    /// The replicated operand's layout does not match the streaming plan.
    ReplicationMismatch { ctx: &'static str },
    Engine(EngineError),
    Kernel(KernelError),
}

impl fmt::Display for MatmulError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimMismatch { lhs, rhs } => write!(
                f,
                "inner dimensions differ: {}x{} times {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Self::NoProcessors => write!(f, "empty processor set"),
            Self::BadRefinement { v } => write!(f, "grid refinement v = {v} must be >= 1"),
            Self::BadPassCount { w, q } => write!(f, "pass count w = {w} outside [1, {q}]"),
            Self::ReplicationMismatch { ctx } => write!(f, "replication mismatch: {ctx}"),
            Self::Engine(e) => write!(f, "{e}"),
            Self::Kernel(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for MatmulError {}

impl From<EngineError> for MatmulError {
    fn from(e: EngineError) -> Self {
        Self::Engine(e)
    }
}

impl From<KernelError> for MatmulError {
    fn from(e: KernelError) -> Self {
        Self::Kernel(e)
    }
}
