//! Orthogonal similarity reductions of symmetric matrices to thinner bands.
//!
//! Three stages compose into the eigensolver: [`full_to_band`] reduces a
//! replicated dense matrix to half-bandwidth `b` with left-looking
//! aggregated updates, [`band_to_band`] shrinks `b` to `b/k` by a pipeline
//! of parallel bulge chases, and [`ca_br_halve`] halves small bandwidths
//! with processor-local chases and a block handoff pipeline. Every stage
//! preserves the spectrum and is metered through the BSP engine.

mod band_to_band;
mod bulge;
mod ca_br;
mod dist_band;
mod error;
mod full_to_band;

pub use band_to_band::band_to_band;
pub use bulge::{bulge_chase_count, BulgeIndexSet};
pub use ca_br::ca_br_halve;
pub use dist_band::DistBand;
pub use error::ReductionError;
pub use full_to_band::{full_to_band, AggregatedUpdate};
