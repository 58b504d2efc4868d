//! Deterministic simulator of a bulk-synchronous parallel machine.
//!
//! The machine executes supersteps: every processor runs a pure local step,
//! then a single exchange delivers all messages and a barrier closes the
//! step. Four quantities are metered exactly: local flops `F`, words sent
//! plus received `W`, memory-to-cache traffic `Q`, and supersteps `S`; per
//! superstep the per-processor maximum is taken and the maxima are summed,
//! giving the model time `gamma*F + beta*W + nu*Q + alpha*S`.
//!
//! Two driving styles share one cost core: [`run_program`] executes a fixed
//! sequence of per-processor step closures, while [`Engine`] lets an
//! orchestrator issue collectives and local kernels dynamically, including
//! fork/join regions in which disjoint processor groups advance through
//! shared supersteps.

mod dist;
mod dist_ops;
mod engine;
mod error;
mod grid;
mod ledger;
mod machine;
mod program;

pub use dist::{reduce_scatter, DistMatrix, Layout};
pub use engine::{Charger, Engine};
pub use error::EngineError;
pub use grid::{ProcGrid, ProcId, ProcSet};
pub use ledger::{CostLedger, Mark, MemoryViolation, StepRecord, Totals};
pub use machine::{MachineParams, MemoryPolicy, ModelAssumptions};
pub use program::{run_program, Inbox, Message, Outbox};
