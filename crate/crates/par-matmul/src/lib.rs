//! Parallel matrix multiplication over the BSP engine.
//!
//! Two routines cover the solver's needs: [`par_matmul`] multiplies
//! rectangular matrices from any load-balanced layout by recursively
//! splitting the largest dimension and halving the processor set, and
//! [`streaming_mm`] multiplies a pre-replicated operand against a
//! distributed one on a `q x q x c` grid, gathering and reduce-scattering
//! one block column per pass.

mod carma;
mod error;
mod streaming;

pub use carma::par_matmul;
pub use error::MatmulError;
pub use streaming::{streaming_mm, StreamingLayout};
