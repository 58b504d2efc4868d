use crate::grid::ProcId;
use crate::machine::MachineParams;

/// Per-superstep record: flops, words exchanged (sent plus received) and
/// vertical traffic for every processor, plus the step's global word flow
/// for the conservation invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub f: Vec<u64>,
    pub w: Vec<u64>,
    pub q: Vec<u64>,
    pub sent: u64,
    pub received: u64,
}

impl StepRecord {
    pub fn new(p: usize) -> Self {
        Self {
            f: vec![0; p],
            w: vec![0; p],
            q: vec![0; p],
            sent: 0,
            received: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.f.iter().all(|&v| v == 0)
            && self.w.iter().all(|&v| v == 0)
            && self.q.iter().all(|&v| v == 0)
    }

    pub fn absorb(&mut self, other: &StepRecord) {
        for i in 0..self.f.len() {
            self.f[i] += other.f[i];
            self.w[i] += other.w[i];
            self.q[i] += other.q[i];
        }
        self.sent += other.sent;
        self.received += other.received;
    }

    pub fn max_f(&self) -> u64 {
        self.f.iter().copied().max().unwrap_or(0)
    }

    pub fn max_w(&self) -> u64 {
        self.w.iter().copied().max().unwrap_or(0)
    }

    pub fn max_q(&self) -> u64 {
        self.q.iter().copied().max().unwrap_or(0)
    }
}

/// Cumulative totals under the max-over-processors-then-sum rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Totals {
    pub f: u64,
    pub w: u64,
    pub q: u64,
    pub s: u64,
}

impl Totals {
    pub fn minus(&self, earlier: &Totals) -> Totals {
        Totals {
            f: self.f - earlier.f,
            w: self.w - earlier.w,
            q: self.q - earlier.q,
            s: self.s - earlier.s,
        }
    }

    pub fn model_time(&self, m: &MachineParams) -> f64 {
        m.gamma * self.f as f64
            + m.beta * self.w as f64
            + m.nu * self.q as f64
            + m.alpha * self.s as f64
    }
}

/// A labelled snapshot of the running totals, used to slice the ledger into
/// named stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub label: String,
    pub totals: Totals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryViolation {
    pub proc: ProcId,
    pub words: u64,
    pub limit: u64,
}

/// Full cost account of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    pub machine: MachineParams,
    pub steps: Vec<StepRecord>,
    pub totals: Totals,
    pub marks: Vec<Mark>,
    pub peak_words: Vec<u64>,
    pub violations: Vec<MemoryViolation>,
}

impl CostLedger {
    /// Totals recomputed from the superstep records; always equals the
    /// stored totals.
    pub fn recompute_totals(&self) -> Totals {
        let mut t = Totals::default();
        for step in &self.steps {
            t.f += step.max_f();
            t.w += step.max_w();
            t.q += step.max_q();
            t.s += 1;
        }
        t
    }

    pub fn model_time(&self) -> f64 {
        self.totals.model_time(&self.machine)
    }

    /// Totals of the stage between mark `i` and mark `i + 1` (or the end).
    pub fn stage_totals(&self, i: usize) -> Totals {
        let start = self.marks[i].totals;
        let end = self
            .marks
            .get(i + 1)
            .map(|m| m.totals)
            .unwrap_or(self.totals);
        end.minus(&start)
    }

    pub fn stage_by_label(&self, label: &str) -> Option<Totals> {
        self.marks
            .iter()
            .position(|m| m.label == label)
            .map(|i| self.stage_totals(i))
    }
}
