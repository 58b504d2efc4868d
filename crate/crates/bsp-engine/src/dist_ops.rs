//! Local elementwise helpers on distributed matrices, with flop charging.

use crate::dist::DistMatrix;
use crate::engine::Engine;
use crate::error::EngineError;
use crate::grid::ProcId;

impl DistMatrix {
    /// One pass over elements counting primary-owner words per processor.
    pub fn per_proc_counts(&self, p: usize) -> Vec<u64> {
        let mut counts = vec![0u64; p];
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                counts[self.owner(i, j)] += 1;
            }
        }
        counts
    }

    /// Elementwise sum with a layout-identical matrix; every processor adds
    /// its own elements (one flop each), no communication.
    pub fn add_local(&self, eng: &mut Engine, other: &DistMatrix) -> Result<DistMatrix, EngineError> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(EngineError::ShapeMismatch { ctx: "add_local" });
        }
        if self.layout() != other.layout() {
            return Err(EngineError::Invalid {
                ctx: "add_local requires identical layouts; redistribute first",
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.set(i, j, self.get(i, j) + other.get(i, j));
            }
        }
        charge_per_owner(eng, &out);
        Ok(out)
    }

    pub fn sub_local(&self, eng: &mut Engine, other: &DistMatrix) -> Result<DistMatrix, EngineError> {
        let negated = other.scale_local(eng, -1.0);
        self.add_local(eng, &negated)
    }

    /// Scale in place by a constant (one flop per owned element).
    pub fn scale_local(&self, eng: &mut Engine, s: f64) -> DistMatrix {
        let mut out = self.clone();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.set(i, j, self.get(i, j) * s);
            }
        }
        charge_per_owner(eng, &out);
        out
    }

    /// Scale column `j` by `factors[j]` (one flop per owned element).
    pub fn scale_columns(&self, eng: &mut Engine, factors: &[f64]) -> DistMatrix {
        assert_eq!(factors.len(), self.cols());
        let mut out = self.clone();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.set(i, j, self.get(i, j) * factors[j]);
            }
        }
        charge_per_owner(eng, &out);
        out
    }

    /// Scale row `i` by `factors[i]` (one flop per owned element).
    pub fn scale_rows(&self, eng: &mut Engine, factors: &[f64]) -> DistMatrix {
        assert_eq!(factors.len(), self.rows());
        let mut out = self.clone();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.set(i, j, self.get(i, j) * factors[i]);
            }
        }
        charge_per_owner(eng, &out);
        out
    }

    /// Stack vertically with per-element ownership inherited from the parts
    /// (pure relabeling: no words move, no cost).
    pub fn vconcat_inherit(parts: &[&DistMatrix], procs: &crate::grid::ProcSet) -> DistMatrix {
        let cols = parts.first().map_or(0, |m| m.cols());
        let rows: usize = parts.iter().map(|m| m.rows()).sum();
        let mut owners = Vec::with_capacity(rows * cols);
        let mut out = DistMatrix::zeros(rows, cols, crate::dist::Layout::Balanced {
            procs: procs.clone(),
        });
        let mut r = 0;
        for part in parts {
            assert_eq!(part.cols(), cols, "vconcat column mismatch");
            for i in 0..part.rows() {
                for j in 0..cols {
                    out.set(r + i, j, part.get(i, j));
                    owners.push(part.owner(i, j) as u32);
                }
            }
            r += part.rows();
        }
        let layout = crate::dist::Layout::Explicit {
            owners: std::sync::Arc::new(owners),
            procs: procs.clone(),
        };
        let mut relabeled = DistMatrix::zeros(rows, cols, layout);
        for i in 0..rows {
            for j in 0..cols {
                relabeled.set(i, j, out.get(i, j));
            }
        }
        relabeled
    }

    /// Plain value write with no ownership change and no cost; used for
    /// structurally known zeros.
    pub fn zero_block(&mut self, r0: usize, c0: usize, rows: usize, cols: usize) {
        for i in 0..rows {
            for j in 0..cols {
                self.set(r0 + i, c0 + j, 0.0);
            }
        }
    }

    /// Overwrite the block at `(r0, c0)` with `block`'s values, first moving
    /// `block` onto this matrix's ownership of that region (one superstep
    /// when ownership differs).
    pub fn write_block(
        &mut self,
        eng: &mut Engine,
        r0: usize,
        c0: usize,
        block: &DistMatrix,
    ) -> Result<(), EngineError> {
        if r0 + block.rows() > self.rows() || c0 + block.cols() > self.cols() {
            return Err(EngineError::ShapeMismatch { ctx: "write_block out of range" });
        }
        let mut flows = std::collections::BTreeMap::<(ProcId, ProcId), u64>::new();
        for i in 0..block.rows() {
            for j in 0..block.cols() {
                let src = block.owner(i, j);
                let dst = self.owner(r0 + i, c0 + j);
                if src != dst {
                    *flows.entry((src, dst)).or_insert(0) += 1;
                }
                self.set(r0 + i, c0 + j, block.get(i, j));
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(())
    }
}

fn charge_per_owner(eng: &mut Engine, m: &DistMatrix) {
    let counts = m.per_proc_counts(eng.p());
    for (proc, count) in counts.iter().enumerate() {
        if *count > 0 {
            eng.charge(proc as ProcId, *count, 0);
        }
    }
}
