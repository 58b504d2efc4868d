use std::collections::BTreeMap;

use bsp_engine::{DistMatrix, Engine, Layout, ProcId, ProcSet};
use dense_kernels::{BandMatrix, Matrix};

use crate::error::ReductionError;

/// A symmetric banded matrix distributed by columns.
///
/// Storage is the lower band: `diag(d)[j] = B[j + d][j]` for
/// `d <= headroom`, where `headroom >= bandwidth` leaves room for bulge
/// fill during a reduction. Column `j`'s stored entries live on
/// `col_owner[j]`; the symmetric mirror is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct DistBand {
    n: usize,
    bandwidth: usize,
    headroom: usize,
    diags: Vec<Vec<f64>>,
    col_owner: Vec<ProcId>,
}

impl DistBand {
    pub fn new(n: usize, bandwidth: usize, headroom: usize, col_owner: Vec<ProcId>) -> Self {
        assert!(headroom >= bandwidth && col_owner.len() == n);
        let diags = (0..=headroom).map(|d| vec![0.0; n.saturating_sub(d)]).collect();
        Self {
            n,
            bandwidth,
            headroom,
            diags,
            col_owner,
        }
    }

    /// Balanced contiguous column blocks over `procs`.
    pub fn block_columns(n: usize, procs: &ProcSet) -> Vec<ProcId> {
        let p = procs.len();
        (0..n).map(|j| procs.get(j * p / n.max(1))).collect()
    }

    pub fn from_band_matrix(bm: &BandMatrix, headroom: usize, col_owner: Vec<ProcId>) -> Self {
        let mut out = Self::new(bm.order(), bm.half_bandwidth(), headroom.max(bm.half_bandwidth()), col_owner);
        for d in 0..=bm.half_bandwidth() {
            for j in 0..bm.order() - d {
                out.diags[d][j] = bm.diagonal(d)[j];
            }
        }
        out
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn col_owner(&self, j: usize) -> ProcId {
        self.col_owner[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.headroom {
            0.0
        } else {
            self.diags[hi - lo][lo]
        }
    }

    /// Symmetric store; writes outside the headroom must be (numerically)
    /// zero and are dropped.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.headroom {
            debug_assert!(
                v.abs() < 1e-10,
                "nonzero write at distance {} > headroom {}",
                hi - lo,
                self.headroom
            );
            return;
        }
        self.diags[hi - lo][lo] = v;
    }

    /// Words stored for column `j` up to distance `depth`.
    fn col_words(&self, j: usize, depth: usize) -> u64 {
        // Entries (j+d, j) for d = 0..=depth, clipped at the matrix end.
        (depth.min(self.n - 1 - j) + 1) as u64
    }

    /// Dense window `rows x cols` moved onto `target` ownership: one
    /// superstep charging the stored entries that leave their column owner.
    /// Cells outside the stored band read as zero and move nothing.
    pub fn extract_window(
        &self,
        eng: &mut Engine,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        target: Layout,
    ) -> Result<DistMatrix, ReductionError> {
        let mut out = DistMatrix::zeros(rows.len(), cols.len(), target);
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for (a, i) in rows.clone().enumerate() {
            for (b, j) in cols.clone().enumerate() {
                let v = self.get(i, j);
                out.set(a, b, v);
                let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                if hi - lo <= self.headroom {
                    let src = self.col_owner[lo];
                    let dst = out.owner(a, b);
                    if src != dst {
                        *flows.entry((src, dst)).or_insert(0) += 1;
                    }
                }
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(out)
    }

    /// Write a dense window back symmetrically (both reflections of each
    /// cell), charging stored entries that cross ownership.
    pub fn write_window(
        &mut self,
        eng: &mut Engine,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        data: &DistMatrix,
    ) -> Result<(), ReductionError> {
        assert_eq!(data.rows(), rows.len());
        assert_eq!(data.cols(), cols.len());
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for (a, i) in rows.clone().enumerate() {
            for (b, j) in cols.clone().enumerate() {
                let v = data.get(a, b);
                let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                if hi - lo <= self.headroom {
                    let src = data.owner(a, b);
                    let dst = self.col_owner[lo];
                    if src != dst {
                        *flows.entry((src, dst)).or_insert(0) += 1;
                    }
                }
                self.set(i, j, v);
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(())
    }

    /// Move to a new column ownership (and optionally a new headroom),
    /// charging each column's stored band words; one superstep.
    pub fn remap_columns(
        &self,
        eng: &mut Engine,
        new_owner: Vec<ProcId>,
        new_headroom: usize,
    ) -> Result<DistBand, ReductionError> {
        assert_eq!(new_owner.len(), self.n);
        let mut out = DistBand::new(self.n, self.bandwidth, new_headroom.max(self.bandwidth), new_owner);
        for d in 0..=self.bandwidth.min(out.headroom) {
            for j in 0..self.n - d {
                out.diags[d][j] = self.diags[d][j];
            }
        }
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for j in 0..self.n {
            let (src, dst) = (self.col_owner[j], out.col_owner[j]);
            if src != dst {
                *flows.entry((src, dst)).or_insert(0) += self.col_words(j, self.bandwidth);
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(out)
    }

    /// Gather the band onto one processor as a plain [`BandMatrix`]
    /// (one superstep).
    pub fn gather_to(&self, eng: &mut Engine, root: ProcId) -> Result<BandMatrix, ReductionError> {
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for j in 0..self.n {
            if self.col_owner[j] != root {
                *flows.entry((self.col_owner[j], root)).or_insert(0) +=
                    self.col_words(j, self.bandwidth);
            }
        }
        eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        self.to_band_matrix()
    }

    /// Orchestrator-side conversion, requiring out-of-band residue below
    /// `bound` (in Frobenius norm) before truncation.
    pub fn truncate(
        &self,
        eng_bound: f64,
        new_bandwidth: usize,
    ) -> Result<DistBand, ReductionError> {
        let mut residual = 0.0f64;
        for d in (new_bandwidth + 1)..=self.headroom {
            for v in &self.diags[d] {
                residual += v * v;
            }
        }
        let residual = (2.0 * residual).sqrt();
        if residual > eng_bound {
            return Err(ReductionError::OutOfBandResidual {
                residual,
                bound: eng_bound,
            });
        }
        let mut out = DistBand::new(self.n, new_bandwidth, new_bandwidth, self.col_owner.clone());
        for d in 0..=new_bandwidth {
            for j in 0..self.n - d {
                out.diags[d][j] = self.diags[d][j];
            }
        }
        Ok(out)
    }

    fn to_band_matrix(&self) -> Result<BandMatrix, ReductionError> {
        let mut dense = Matrix::zeros(self.n, self.n);
        for d in 0..=self.bandwidth {
            for j in 0..self.n - d {
                dense[(j + d, j)] = self.diags[d][j];
                dense[(j, j + d)] = self.diags[d][j];
            }
        }
        BandMatrix::from_dense(&dense, self.bandwidth, 0.0).map_err(ReductionError::from)
    }

    /// Dense view for verification.
    pub fn to_dense(&self) -> Matrix {
        let mut dense = Matrix::zeros(self.n, self.n);
        for d in 0..=self.headroom {
            for j in 0..self.n - d {
                dense[(j + d, j)] = self.diags[d][j];
                dense[(j, j + d)] = self.diags[d][j];
            }
        }
        dense
    }

    /// Stored words within the logical bandwidth, per processor.
    pub fn footprints(&self, p: usize) -> Vec<u64> {
        let mut words = vec![0u64; p];
        for j in 0..self.n {
            words[self.col_owner[j]] += self.col_words(j, self.bandwidth);
        }
        words
    }

    /// Write a dense symmetric diagonal block at `(col0, col0)`, charging
    /// moved lower-triangle entries (one superstep).
    pub fn write_diag_block(
        &mut self,
        eng: &mut Engine,
        col0: usize,
        block: &DistMatrix,
    ) -> Result<(), ReductionError> {
        let s = block.rows();
        assert_eq!(s, block.cols());
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for i in 0..s {
            for j in 0..=i {
                let (src, dst) = (block.owner(i, j), self.col_owner[col0 + j]);
                if src != dst {
                    *flows.entry((src, dst)).or_insert(0) += 1;
                }
                self.set(col0 + i, col0 + j, block.get(i, j));
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(())
    }

    /// Write the upper-triangular `R` as the subdiagonal coupling block:
    /// rows `col0 + s ..`, columns `col0 ..` hold `R` transposed.
    pub fn write_subdiag_block(
        &mut self,
        eng: &mut Engine,
        col0: usize,
        r: &DistMatrix,
    ) -> Result<(), ReductionError> {
        let s = r.rows();
        assert_eq!(s, r.cols());
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for i in 0..s {
            for j in i..s {
                // R[i][j] lands at matrix entry (col0 + s + i, col0 + j):
                // stored at column col0 + j.
                let (src, dst) = (r.owner(i, j), self.col_owner[col0 + j]);
                if src != dst {
                    *flows.entry((src, dst)).or_insert(0) += 1;
                }
                self.set(col0 + s + i, col0 + j, r.get(i, j));
            }
        }
        // The strictly-lower part of the coupling block is zero.
        for i in 0..s {
            for j in 0..i {
                self.set(col0 + s + i, col0 + j, 0.0);
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, t), w)| (f, t, w)))?;
        }
        Ok(())
    }
}
