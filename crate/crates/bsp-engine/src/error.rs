use std::fmt;

use crate::grid::ProcId;

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    /// Message addressed to a processor id outside the machine.
    AddressOutOfRange { from: ProcId, to: ProcId, p: usize },
    /// A local footprint exceeded the per-processor memory M under the
    /// strict policy.
    MemoryLimit { proc: ProcId, words: u64, limit: u64 },
    /// Fork branches must run on pairwise disjoint processor sets.
    OverlappingBranches { proc: ProcId },
    /// A collective or layout constructor was given an empty group.
    EmptyGroup { ctx: &'static str },
    /// Conforming shapes required (gather pieces, reduce contributions, ...).
    ShapeMismatch { ctx: &'static str },
    /// Invalid machine or layout parameters.
    Invalid { ctx: &'static str },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AddressOutOfRange { from, to, p } => {
                write!(f, "processor {from} sent to {to}, machine has p={p}")
            }
            Self::MemoryLimit { proc, words, limit } => {
                write!(f, "processor {proc} holds {words} words, limit M={limit}")
            }
            Self::OverlappingBranches { proc } => {
                write!(f, "processor {proc} appears in more than one fork branch")
            }
            Self::EmptyGroup { ctx } => write!(f, "{ctx}: empty processor group"),
            Self::ShapeMismatch { ctx } => write!(f, "{ctx}: shape mismatch"),
            Self::Invalid { ctx } => write!(f, "{ctx}"),
        }
    }
}

impl std::error::Error for EngineError {}
