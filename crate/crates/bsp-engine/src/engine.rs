use dense_kernels::CostSink;

use crate::error::EngineError;
use crate::grid::{ProcId, ProcSet};
use crate::ledger::{CostLedger, Mark, MemoryViolation, StepRecord, Totals};
use crate::machine::{MachineParams, MemoryPolicy};

struct Frame {
    steps: Vec<StepRecord>,
    open: StepRecord,
}

impl Frame {
    fn new(p: usize) -> Self {
        Self {
            steps: Vec::new(),
            open: StepRecord::new(p),
        }
    }
}

/// Orchestrator-driven machine simulation.
///
/// Local compute charges accumulate in an open superstep record; every
/// exchange stamps its word counts there, seals the record and opens a new
/// one, so compute phases merge into the superstep whose exchange follows
/// them. [`Engine::fork`] runs branches on disjoint processor sets with
/// their own step sequences and merges them index-aligned on join, which is
/// how concurrent subtrees share supersteps.
pub struct Engine {
    machine: MachineParams,
    policy: MemoryPolicy,
    frames: Vec<Frame>,
    marks: Vec<Mark>,
    peak_words: Vec<u64>,
    violations: Vec<MemoryViolation>,
}

impl Engine {
    pub fn new(machine: MachineParams, policy: MemoryPolicy) -> Self {
        let p = machine.p;
        Self {
            machine,
            policy,
            frames: vec![Frame::new(p)],
            marks: Vec::new(),
            peak_words: vec![0; p],
            violations: Vec::new(),
        }
    }

    pub fn machine(&self) -> &MachineParams {
        &self.machine
    }

    pub fn p(&self) -> usize {
        self.machine.p
    }

    pub fn all_procs(&self) -> ProcSet {
        ProcSet::range(0, self.machine.p)
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("root frame always present")
    }

    /// Accumulate flops and vertical words for `proc` in the open superstep.
    /// Charges are unsigned by construction, so negative charges cannot be
    /// expressed.
    pub fn charge(&mut self, proc: ProcId, flops: u64, vertical_words: u64) {
        debug_assert!(proc < self.machine.p);
        let open = &mut self.frame().open;
        open.f[proc] += flops;
        open.q[proc] += vertical_words;
    }

    /// Cost sink bound to one processor, for running sequential kernels
    /// inside a local step.
    pub fn charger(&mut self, proc: ProcId) -> Charger<'_> {
        Charger { eng: self, proc }
    }

    /// Record `words` live on `proc`; enforce the memory limit per policy.
    pub fn note_footprint(&mut self, proc: ProcId, words: u64) -> Result<(), EngineError> {
        if words > self.peak_words[proc] {
            self.peak_words[proc] = words;
        }
        if words > self.machine.m_words {
            let v = MemoryViolation {
                proc,
                words,
                limit: self.machine.m_words,
            };
            match self.policy {
                MemoryPolicy::Warn => {
                    log::warn!(
                        "memory model violation: proc {} holds {} words (M = {})",
                        proc,
                        words,
                        self.machine.m_words
                    );
                    self.violations.push(v);
                }
                MemoryPolicy::Strict => {
                    return Err(EngineError::MemoryLimit {
                        proc,
                        words,
                        limit: self.machine.m_words,
                    });
                }
            }
        }
        Ok(())
    }

    /// Meter one exchange from `(from, to, words)` triples and seal the
    /// superstep. Senders and receivers are both charged; self-addressed
    /// traffic is local and free.
    pub fn exchange_counts(
        &mut self,
        flows: impl IntoIterator<Item = (ProcId, ProcId, u64)>,
    ) -> Result<(), EngineError> {
        let p = self.machine.p;
        let open = &mut self.frames.last_mut().unwrap().open;
        for (from, to, words) in flows {
            if from >= p || to >= p {
                return Err(EngineError::AddressOutOfRange { from, to, p });
            }
            if from == to || words == 0 {
                continue;
            }
            open.w[from] += words;
            open.w[to] += words;
            open.sent += words;
            open.received += words;
        }
        self.seal();
        Ok(())
    }

    fn seal(&mut self) {
        let p = self.machine.p;
        let frame = self.frames.last_mut().unwrap();
        let record = std::mem::replace(&mut frame.open, StepRecord::new(p));
        frame.steps.push(record);
    }

    /// Run `branches.len()` sub-computations on pairwise disjoint processor
    /// sets. Branch step sequences are merged index-aligned: the region
    /// costs `max` over branches of their superstep counts, and per-step
    /// counters combine across branches.
    pub fn fork<T, E>(
        &mut self,
        branches: &[ProcSet],
        mut run: impl FnMut(&mut Self, usize) -> Result<T, E>,
    ) -> Result<Vec<T>, E>
    where
        E: From<EngineError>,
    {
        for (i, a) in branches.iter().enumerate() {
            for b in branches.iter().skip(i + 1) {
                if !a.is_disjoint(b) {
                    let clash = a.ids().iter().copied().find(|id| b.contains(*id)).unwrap();
                    return Err(EngineError::OverlappingBranches { proc: clash }.into());
                }
            }
        }
        let p = self.machine.p;
        let mut results = Vec::with_capacity(branches.len());
        let mut done = Vec::with_capacity(branches.len());
        for i in 0..branches.len() {
            self.frames.push(Frame::new(p));
            let out = run(self, i);
            let frame = self.frames.pop().expect("branch frame");
            results.push(out?);
            done.push(frame);
        }

        let depth = done.iter().map(|f| f.steps.len()).max().unwrap_or(0);
        if depth > 0 {
            let mut merged: Vec<StepRecord> = (0..depth).map(|_| StepRecord::new(p)).collect();
            for f in &done {
                for (t, step) in f.steps.iter().enumerate() {
                    merged[t].absorb(step);
                }
            }
            // Compute issued before the region belongs to the superstep its
            // first exchange closes.
            let parent = self.frame();
            merged[0].absorb(&parent.open);
            parent.open = StepRecord::new(p);
            parent.steps.append(&mut merged);
        }
        // Trailing branch compute waits for the next exchange after the join.
        let parent = self.frame();
        for f in &done {
            parent.open.absorb(&f.open);
        }
        Ok(results)
    }

    /// Cumulative totals, counting the open record's contribution toward F,
    /// W and Q but not S.
    pub fn totals_now(&self) -> Totals {
        let mut t = Totals::default();
        for frame in &self.frames {
            for step in &frame.steps {
                t.f += step.max_f();
                t.w += step.max_w();
                t.q += step.max_q();
                t.s += 1;
            }
            t.f += frame.open.max_f();
            t.w += frame.open.max_w();
            t.q += frame.open.max_q();
        }
        t
    }

    /// Label a stage boundary. Only valid outside fork regions; seals any
    /// pending compute so stage slices stay cleanly separated.
    pub fn mark(&mut self, label: &str) {
        assert_eq!(self.frames.len(), 1, "marks only apply at the root frame");
        if !self.frames[0].open.is_empty() {
            self.seal();
        }
        let totals = self.totals_now();
        self.marks.push(Mark {
            label: label.to_string(),
            totals,
        });
    }

    /// Close the run: seals trailing compute (an execution that computed
    /// anything occupies at least one superstep) and returns the ledger.
    pub fn finish(mut self) -> CostLedger {
        assert_eq!(self.frames.len(), 1, "finish called inside a fork region");
        if !self.frames[0].open.is_empty() {
            self.seal();
        }
        let steps = self.frames.pop().unwrap().steps;
        let mut totals = Totals::default();
        for step in &steps {
            totals.f += step.max_f();
            totals.w += step.max_w();
            totals.q += step.max_q();
            totals.s += 1;
        }
        CostLedger {
            machine: self.machine,
            steps,
            totals,
            marks: self.marks,
            peak_words: self.peak_words,
            violations: self.violations,
        }
    }
}

/// [`CostSink`] adapter binding kernel charges to one processor.
pub struct Charger<'a> {
    eng: &'a mut Engine,
    proc: ProcId,
}

impl Charger<'_> {
    pub fn proc(&self) -> ProcId {
        self.proc
    }

    /// Inherent mirror of [`CostSink::charge`], usable without the trait in
    /// scope.
    pub fn charge(&mut self, flops: u64, vertical_words: u64) {
        self.eng.charge(self.proc, flops, vertical_words);
    }

    pub fn footprint(&mut self, words: u64) -> Result<(), EngineError> {
        self.eng.note_footprint(self.proc, words)
    }
}

impl CostSink for Charger<'_> {
    fn charge(&mut self, flops: u64, vertical_words: u64) {
        self.eng.charge(self.proc, flops, vertical_words);
    }

    fn cache_words(&self) -> u64 {
        self.eng.machine.h_words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(p: usize) -> MachineParams {
        MachineParams::new(p, 1 << 24, 1 << 15, 1.0, 10.0, 2.0, 1000.0).unwrap()
    }

    #[test]
    fn empty_run_has_zero_ledger() {
        let eng = Engine::new(machine(4), MemoryPolicy::Warn);
        let ledger = eng.finish();
        assert_eq!(ledger.totals, Totals::default());
        assert!(ledger.steps.is_empty());
    }

    #[test]
    fn ring_send_counts_both_endpoints() {
        // Each of 4 processors sends 10 words to its neighbor: every
        // processor sends 10 and receives 10, so the step W is 20.
        let mut eng = Engine::new(machine(4), MemoryPolicy::Warn);
        eng.exchange_counts((0..4).map(|i| (i, (i + 1) % 4, 10u64)))
            .unwrap();
        let ledger = eng.finish();
        assert_eq!(ledger.totals.s, 1);
        assert_eq!(ledger.totals.w, 20);
    }

    #[test]
    fn superstep_w_sums_maxima() {
        let mut eng = Engine::new(machine(2), MemoryPolicy::Warn);
        eng.exchange_counts([(0, 1, 5u64)]).unwrap();
        eng.exchange_counts([(1, 0, 5u64)]).unwrap();
        let ledger = eng.finish();
        assert_eq!(ledger.totals.s, 2);
        assert_eq!(ledger.totals.w, 10);
    }

    #[test]
    fn all_to_all_word_count() {
        let mut eng = Engine::new(machine(4), MemoryPolicy::Warn);
        let mut flows = Vec::new();
        for i in 0..4usize {
            for j in 0..4usize {
                if i != j {
                    flows.push((i, j, 1u64));
                }
            }
        }
        eng.exchange_counts(flows).unwrap();
        let ledger = eng.finish();
        // Per processor: 3 sent + 3 received.
        assert_eq!(ledger.totals.w, 6);
        assert_eq!(ledger.totals.s, 1);
    }

    #[test]
    fn broadcast_charges_the_root_per_destination() {
        let mut eng = Engine::new(machine(4), MemoryPolicy::Warn);
        eng.exchange_counts((1..4).map(|to| (0usize, to, 8u64)))
            .unwrap();
        let ledger = eng.finish();
        assert_eq!(ledger.steps[0].w[0], 24);
        assert_eq!(ledger.steps[0].w[1], 8);
        assert_eq!(ledger.totals.w, 24);
    }

    #[test]
    fn charges_accumulate() {
        let mut eng = Engine::new(machine(2), MemoryPolicy::Warn);
        eng.charge(0, 10, 0);
        eng.charge(0, 10, 0);
        let ledger = eng.finish();
        assert_eq!(ledger.totals.f, 20);
        assert_eq!(ledger.totals.s, 1); // trailing compute occupies one step
    }

    #[test]
    fn address_out_of_range_rejected() {
        let mut eng = Engine::new(machine(2), MemoryPolicy::Warn);
        let err = eng.exchange_counts([(0usize, 5usize, 1u64)]).unwrap_err();
        assert!(matches!(err, EngineError::AddressOutOfRange { to: 5, .. }));
    }

    #[test]
    fn strict_memory_policy_errors() {
        let m = MachineParams::new(2, 100, 10, 1.0, 1.0, 1.0, 1.0).unwrap();
        let mut eng = Engine::new(m, MemoryPolicy::Strict);
        assert!(eng.note_footprint(0, 99).is_ok());
        assert!(eng.note_footprint(0, 101).is_err());
        let m = MachineParams::new(2, 100, 10, 1.0, 1.0, 1.0, 1.0).unwrap();
        let mut eng = Engine::new(m, MemoryPolicy::Warn);
        assert!(eng.note_footprint(0, 101).is_ok());
        let ledger = eng.finish();
        assert_eq!(ledger.violations.len(), 1);
        assert_eq!(ledger.peak_words[0], 101);
    }

    #[test]
    fn fork_merges_supersteps() {
        // Two disjoint branches, one with 2 exchanges and one with 3:
        // the region costs 3 supersteps with combined per-step counters.
        let mut eng = Engine::new(machine(4), MemoryPolicy::Warn);
        let sets = [ProcSet::new(vec![0, 1]), ProcSet::new(vec![2, 3])];
        eng.fork::<(), EngineError>(&sets, |eng, i| {
            let rounds = if i == 0 { 2 } else { 3 };
            let (a, b) = if i == 0 { (0, 1) } else { (2, 3) };
            for _ in 0..rounds {
                eng.charge(a, 7, 0);
                eng.exchange_counts([(a, b, 4u64)])?;
            }
            Ok(())
        })
        .unwrap();
        let ledger = eng.finish();
        assert_eq!(ledger.totals.s, 3);
        // Per step, every active processor sends or receives 4 words.
        assert_eq!(ledger.totals.w, 3 * 4);
        assert_eq!(ledger.totals.f, 3 * 7);
        // Step 0 carries both branches' counters.
        assert_eq!(ledger.steps[0].w, vec![4, 4, 4, 4]);
    }

    #[test]
    fn fork_rejects_overlap() {
        let mut eng = Engine::new(machine(4), MemoryPolicy::Warn);
        let sets = [ProcSet::new(vec![0, 1]), ProcSet::new(vec![1, 2])];
        let err = eng
            .fork::<(), EngineError>(&sets, |_, _| Ok(()))
            .unwrap_err();
        assert!(matches!(err, EngineError::OverlappingBranches { proc: 1 }));
    }

    #[test]
    fn ledger_totals_match_recomputation() {
        let mut eng = Engine::new(machine(3), MemoryPolicy::Warn);
        eng.charge(1, 5, 2);
        eng.exchange_counts([(0, 1, 3u64), (1, 2, 9u64)]).unwrap();
        eng.charge(2, 11, 4);
        let ledger = eng.finish();
        assert_eq!(ledger.totals, ledger.recompute_totals());
        // Conservation: words received equals words sent in every step.
        for step in &ledger.steps {
            assert_eq!(step.sent, step.received);
        }
        // Model time formula.
        let t = ledger.totals;
        let m = &ledger.machine;
        let expect = m.gamma * t.f as f64
            + m.beta * t.w as f64
            + m.nu * t.q as f64
            + m.alpha * t.s as f64;
        assert_eq!(ledger.model_time(), expect);
    }

    #[test]
    fn marks_slice_stages() {
        let mut eng = Engine::new(machine(2), MemoryPolicy::Warn);
        eng.mark("a");
        eng.charge(0, 4, 0);
        eng.exchange_counts([(0, 1, 2u64)]).unwrap();
        eng.mark("b");
        eng.exchange_counts([(1, 0, 6u64)]).unwrap();
        let ledger = eng.finish();
        let a = ledger.stage_by_label("a").unwrap();
        assert_eq!((a.f, a.w, a.s), (4, 2, 1));
        let b = ledger.stage_by_label("b").unwrap();
        assert_eq!((b.f, b.w, b.s), (0, 6, 1));
    }
}
