use crate::error::EngineError;

/// The simulated machine: processor count, per-processor memory and cache
/// sizes in words, and the four unit costs (flop, word sent or received,
/// word moved between memory and cache, synchronization).
#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    pub p: usize,
    pub m_words: u64,
    pub h_words: u64,
    pub gamma: f64,
    pub beta: f64,
    pub nu: f64,
    pub alpha: f64,
}

/// The model's simplifying assumptions on relative unit costs, recorded as
/// checkable flags rather than enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelAssumptions {
    /// Sending a word costs at least a memory-to-cache move: beta >= nu.
    pub beta_dominates_nu: bool,
    /// Matmul-optimal cache reuse covers vertical traffic: gamma*sqrt(H) >= nu.
    pub flops_cover_vertical: bool,
}

impl MachineParams {
    pub fn new(
        p: usize,
        m_words: u64,
        h_words: u64,
        gamma: f64,
        beta: f64,
        nu: f64,
        alpha: f64,
    ) -> Result<Self, EngineError> {
        if p < 1 || m_words < 1 || h_words < 1 {
            return Err(EngineError::Invalid {
                ctx: "machine needs p >= 1, M >= 1, H >= 1",
            });
        }
        if !(gamma >= 0.0 && beta >= 0.0 && nu >= 0.0 && alpha >= 0.0) {
            return Err(EngineError::Invalid {
                ctx: "unit costs must be nonnegative",
            });
        }
        Ok(Self {
            p,
            m_words,
            h_words,
            gamma,
            beta,
            nu,
            alpha,
        })
    }

    pub fn assumptions(&self) -> ModelAssumptions {
        ModelAssumptions {
            beta_dominates_nu: self.beta >= self.nu,
            flops_cover_vertical: self.gamma * (self.h_words as f64).sqrt() >= self.nu,
        }
    }
}

/// What to do when a processor's declared live footprint exceeds M.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryPolicy {
    /// Record a violation and keep running (the memory bounds are asymptotic).
    #[default]
    Warn,
    /// Fail the run.
    Strict,
}
