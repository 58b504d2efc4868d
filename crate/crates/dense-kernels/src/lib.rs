//! Sequential numerical kernels executed inside a single virtual processor.
//!
//! Every kernel charges its computation and memory-traffic cost through a
//! [`CostSink`], so the same routines can run standalone (with [`NullSink`])
//! or inside a metered machine simulation. Flop charges are the standard
//! leading-term formulas (multiply+add counted as two flops); vertical
//! traffic is charged analytically from operand sizes whenever the operands
//! do not fit in the cache advertised by the sink.

mod band;
mod cost;
mod error;
mod lu;
mod matrix;
mod qr;
mod tridiag;

pub use band::{band_to_tridiagonal_seq, BandMatrix};
pub use cost::{CostSink, NullSink};
pub use error::KernelError;
pub use lu::{lu_nopivot_shifted, LuFactors};
pub use matrix::Matrix;
pub use qr::{local_matmul, local_qr, matmul_raw, HouseholderFactor};
pub use tridiag::tridiagonal_eigenvalues;
