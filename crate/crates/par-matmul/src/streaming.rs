use std::sync::Arc;

use bsp_engine::{DistMatrix, Engine, Layout, ProcGrid, ProcId};
use dense_kernels::{matmul_raw, Matrix};

use crate::error::MatmulError;

/// Plan for the replicated streaming multiply: the `q x q x c` grid, the
/// block-defining row/column permutations (cyclic by default, matching the
/// replicated-cyclic matrix layout), the pass count `w`, and an optional
/// override for the words assumed cache-resident on each processor when
/// deciding whether the replicated operand streams from memory.
#[derive(Debug, Clone)]
pub struct StreamingLayout {
    pub grid: ProcGrid,
    pub passes: usize,
    row_perm: Option<Arc<Vec<usize>>>,
    col_perm: Option<Arc<Vec<usize>>>,
    pub resident_words: Option<u64>,
}

impl StreamingLayout {
    /// The default instantiation: cyclic block maps, `w` passes.
    pub fn cyclic(grid: ProcGrid, passes: usize) -> Self {
        Self {
            grid,
            passes,
            row_perm: None,
            col_perm: None,
            resident_words: None,
        }
    }

    /// Custom bijections assigning matrix rows / inner indices to block
    /// rows / columns. Each permutation maps an index to its position in
    /// the permuted order; blocks are the `q` balanced chunks of that order.
    pub fn with_permutations(mut self, row_perm: Vec<usize>, col_perm: Vec<usize>) -> Self {
        self.row_perm = Some(Arc::new(row_perm));
        self.col_perm = Some(Arc::new(col_perm));
        self
    }

    pub fn with_resident_words(mut self, words: u64) -> Self {
        self.resident_words = Some(words);
        self
    }

    pub fn z(&self) -> usize {
        self.passes * self.grid.c()
    }

    /// Block row of matrix row `r` under the row permutation (cyclic map
    /// when none given: block = r mod q).
    fn row_block(&self, r: usize, m: usize) -> usize {
        match &self.row_perm {
            None => r % self.grid.q(),
            Some(p) => p[r] * self.grid.q() / m,
        }
    }

    /// Block column of inner index `t` (cyclic map when none given).
    fn col_block(&self, t: usize, n: usize) -> usize {
        match &self.col_perm {
            None => t % self.grid.q(),
            Some(p) => p[t] * self.grid.q() / n,
        }
    }
}

/// Replicated streaming multiply: `A` (m x n) lives in full blocks `A_ij`
/// on `Pi[i, j, l]` for every layer `l`; `B` (n x k) starts in any
/// load-balanced layout. One redistribution plus `w` gather / compute /
/// reduce-scatter rounds produce `C = A * B` with `mk/p` elements per
/// processor. Superstep count is exactly `1 + 2w`.
pub fn streaming_mm(
    eng: &mut Engine,
    a: &DistMatrix,
    b: &DistMatrix,
    plan: &StreamingLayout,
) -> Result<DistMatrix, MatmulError> {
    let (m, n) = (a.rows(), a.cols());
    let k = b.cols();
    if n != b.rows() {
        return Err(MatmulError::DimMismatch {
            lhs: (m, n),
            rhs: (b.rows(), k),
        });
    }
    let grid = &plan.grid;
    let (q, c, w) = (grid.q(), grid.c(), plan.passes);
    if w < 1 || w > q {
        return Err(MatmulError::BadPassCount { w, q });
    }
    let transposed = match a.layout() {
        Layout::ReplicatedCyclic { grid: g, transposed } if g == grid => *transposed,
        Layout::ReplicatedCyclic { .. } => {
            return Err(MatmulError::ReplicationMismatch {
                ctx: "operand grid differs from the plan grid",
            })
        }
        _ => {
            return Err(MatmulError::ReplicationMismatch {
                ctx: "left operand must be replicated cyclically on the plan grid",
            })
        }
    };
    if plan.row_perm.is_some() || plan.col_perm.is_some() {
        validate_custom_blocks(a, plan, transposed)?;
    }
    let z = w * c;

    // Index machinery: rows of A blocked by P1, the inner dimension blocked
    // by P2, columns of B cut into z balanced contiguous chunks.
    let row_block = |r: usize| {
        if transposed {
            plan.col_block(r, m)
        } else {
            plan.row_block(r, m)
        }
    };
    let inner_block = |t: usize| {
        if transposed {
            plan.row_block(t, n)
        } else {
            plan.col_block(t, n)
        }
    };
    let chunk_of_col = |col: usize| col * z / k.max(1);
    let chunk_range = |h: usize| (h * k / z, (h + 1) * k / z);
    // Within chunk h, columns split into q balanced sub-slices; sub-slice s
    // belongs to grid index s.
    let sub_of_col = |col: usize, h: usize| {
        let (lo, hi) = chunk_range(h);
        debug_assert!(col >= lo && col < hi);
        (col - lo) * q / (hi - lo).max(1)
    };

    // Redistribute B: processor Pi[i, j, l] owns sub-slice i of the columns
    // of B_{j,h} for each of its h's (h = l + t*c).
    let b_owner = |r: usize, col: usize| -> ProcId {
        let j = inner_block(r);
        let h = chunk_of_col(col);
        let l = h % c;
        let i = sub_of_col(col, h);
        grid.at(i, j, l)
    };
    let mut owners = Vec::with_capacity(n * k);
    for r in 0..n {
        for col in 0..k {
            owners.push(b_owner(r, col) as u32);
        }
    }
    let staged = b.redistribute(
        eng,
        Layout::Explicit {
            owners: Arc::new(owners),
            procs: grid.all(),
        },
    )?;

    let cache = eng.machine().h_words;
    let staged_counts = staged.per_proc_counts(eng.p());
    let mut result = Matrix::zeros(m, k);
    let mut result_owners: Vec<u32> = vec![0; m * k];

    // Row / inner index lists per block, computed once.
    let row_lists: Vec<Vec<usize>> = block_lists(m, q, row_block);
    let inner_lists: Vec<Vec<usize>> = block_lists(n, q, inner_block);

    for t in 0..w {
        // Gather phase: every Pi[i, j, l] assembles the full B_{j, h(l,t)}.
        let mut flows = std::collections::BTreeMap::<(ProcId, ProcId), u64>::new();
        for l in 0..c {
            let h = l + t * c;
            let (lo, hi) = chunk_range(h);
            for j in 0..q {
                for &r in &inner_lists[j] {
                    for col in lo..hi {
                        let src = staged.owner(r, col);
                        for i in 0..q {
                            let dst = grid.at(i, j, l);
                            if dst != src {
                                *flows.entry((src, dst)).or_insert(0) += 1;
                            }
                        }
                    }
                }
            }
        }
        eng.exchange_counts(flows.into_iter().map(|((f, s), v)| (f, s, v)))?;

        // Compute phase: local block products, charged to their processors.
        let mut partials: Vec<Vec<(ProcId, Matrix)>> = vec![Vec::new(); c * q];
        for l in 0..c {
            let h = l + t * c;
            let (lo, hi) = chunk_range(h);
            let bw = hi - lo;
            for j in 0..q {
                let bj = extract(b, &inner_lists[j], lo, bw);
                for i in 0..q {
                    let proc = grid.at(i, j, l);
                    let ai = extract_block(a, &row_lists[i], &inner_lists[j]);
                    let part = matmul_raw(&ai, &bj)?;
                    let (bm, bn, bk) =
                        (ai.rows() as u64, ai.cols() as u64, bj.cols() as u64);
                    let a_words = bm * bn;
                    let stream_words = bn * bk + bm * bk;
                    let resident = plan.resident_words.unwrap_or(a_words);
                    let q_charge = if resident > cache {
                        a_words + stream_words
                    } else {
                        stream_words
                    };
                    eng.charge(proc, 2 * bm * bn * bk, q_charge);
                    let owned_b = staged_counts[proc];
                    eng.note_footprint(proc, a_words + bn * bk + bm * bk + owned_b)?;
                    partials[l * q + i].push((proc, part));
                }
            }
        }

        // Reduce-scatter phase: sum over j within each row group, leaving
        // sub-slice j of C_{i,h} on Pi[i, j, l].
        let mut flows = std::collections::BTreeMap::<(ProcId, ProcId), u64>::new();
        for l in 0..c {
            let h = l + t * c;
            let (lo, hi) = chunk_range(h);
            for i in 0..q {
                let group = &partials[l * q + i];
                for (a_row, &r) in row_lists[i].iter().enumerate() {
                    for col in lo..hi {
                        // Sub-slice s of C_ih lands on grid position (i, s).
                        let dst = grid.at(i, sub_of_col(col, h), l);
                        let mut sum = 0.0;
                        for (src, part) in group {
                            sum += part[(a_row, col - lo)];
                            if *src != dst {
                                *flows.entry((*src, dst)).or_insert(0) += 1;
                            }
                        }
                        result[(r, col)] = sum;
                        result_owners[r * k + col] = dst as u32;
                    }
                }
            }
        }
        eng.exchange_counts(flows.into_iter().map(|((f, s), v)| (f, s, v)))?;
    }

    let mut out = DistMatrix::zeros(m, k, Layout::Explicit {
        owners: Arc::new(result_owners),
        procs: grid.all(),
    });
    for i in 0..m {
        for j in 0..k {
            out.set(i, j, result[(i, j)]);
        }
    }
    Ok(out)
}

fn block_lists(n: usize, q: usize, block_of: impl Fn(usize) -> usize) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); q];
    for r in 0..n {
        lists[block_of(r)].push(r);
    }
    lists
}

/// Rows `rows` and the contiguous column range of a matrix.
fn extract(src: &DistMatrix, rows: &[usize], col0: usize, cols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), cols);
    for (a, &r) in rows.iter().enumerate() {
        for j in 0..cols {
            out[(a, j)] = src.get(r, col0 + j);
        }
    }
    out
}

fn extract_block(src: &DistMatrix, rows: &[usize], cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), cols.len());
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            out[(a, b)] = src.get(r, c);
        }
    }
    out
}

fn validate_custom_blocks(
    a: &DistMatrix,
    plan: &StreamingLayout,
    transposed: bool,
) -> Result<(), MatmulError> {
    // Custom bijections must agree with the cyclic replication pattern the
    // operand actually has: block (i, j) fully owned by Pi[i, j, l].
    let q = plan.grid.q();
    for r in 0..a.rows() {
        for col in 0..a.cols() {
            let (bi, bj) = if transposed {
                (plan.col_block(r, a.rows()), plan.row_block(col, a.cols()))
            } else {
                (plan.row_block(r, a.rows()), plan.col_block(col, a.cols()))
            };
            if bi != r % q || bj != col % q {
                return Err(MatmulError::ReplicationMismatch {
                    ctx: "custom block permutation disagrees with the replicated layout",
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsp_engine::{MachineParams, MemoryPolicy, ProcSet};
    use dense_kernels::NullSink;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine(p: usize, h: u64) -> Engine {
        Engine::new(
            MachineParams::new(p, 1 << 24, h, 1.0, 10.0, 2.0, 1000.0).unwrap(),
            MemoryPolicy::Warn,
        )
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn replicated(m: &Matrix, grid: &ProcGrid) -> DistMatrix {
        DistMatrix::from_matrix(m, Layout::ReplicatedCyclic {
            grid: grid.clone(),
            transposed: false,
        })
    }

    #[test]
    fn single_processor_equals_local() {
        let grid = ProcGrid::contiguous(1, 1).unwrap();
        let mut eng = engine(1, 1 << 15);
        let a = random(4, 4, 1);
        let b = random(4, 4, 2);
        let bd = DistMatrix::from_matrix(&b, Layout::Balanced { procs: ProcSet::range(0, 1) });
        let plan = StreamingLayout::cyclic(grid.clone(), 1);
        let c = streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan).unwrap();
        let want = dense_kernels::local_matmul(&a, &b, &mut NullSink).unwrap();
        assert!(c.to_matrix().sub(&want).frobenius_norm() < 1e-14);
    }

    #[test]
    fn four_procs_matches_sequential() {
        let grid = ProcGrid::contiguous(2, 1).unwrap();
        let mut eng = engine(4, 1 << 15);
        let a = random(4, 4, 3);
        let b = random(4, 4, 4);
        let bd = DistMatrix::from_matrix(&b, Layout::Balanced { procs: ProcSet::range(0, 4) });
        let plan = StreamingLayout::cyclic(grid.clone(), 1);
        let c = streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan).unwrap();
        let want = matmul_raw(&a, &b).unwrap();
        let tol = 4.0 * f64::EPSILON * a.frobenius_norm() * b.frobenius_norm();
        assert!(c.to_matrix().sub(&want).frobenius_norm() <= tol);
        // Result is balanced: mk/p elements per processor.
        for p in 0..4 {
            assert_eq!(c.local_count(p), 4);
        }
    }

    #[test]
    fn superstep_count_is_one_plus_two_w() {
        for w in [1usize, 2] {
            let grid = ProcGrid::contiguous(2, 1).unwrap();
            let mut eng = engine(4, 1 << 15);
            let a = random(8, 8, 5);
            let b = random(8, 8, 6);
            let bd =
                DistMatrix::from_matrix(&b, Layout::Balanced { procs: ProcSet::range(0, 4) });
            let plan = StreamingLayout::cyclic(grid.clone(), w);
            streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan).unwrap();
            let ledger = eng.finish();
            assert_eq!(ledger.totals.s as usize, 1 + 2 * w, "w = {w}");
        }
    }

    #[test]
    fn replicated_layers_cut_horizontal_words() {
        // Fixed p = 64 and sizes; c = 4 must move strictly fewer words than
        // c = 1 for the same pass count.
        let a = random(32, 32, 7);
        let b = random(32, 32, 8);
        let mut w_by_c = Vec::new();
        for (q, c) in [(8usize, 1usize), (4, 4)] {
            let grid = ProcGrid::contiguous(q, c).unwrap();
            let mut eng = engine(q * q * c, 1 << 15);
            let bd = DistMatrix::from_matrix(&b, Layout::Balanced {
                procs: ProcSet::range(0, q * q * c),
            });
            let plan = StreamingLayout::cyclic(grid.clone(), 1);
            let cm = streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan).unwrap();
            let want = matmul_raw(&a, &b).unwrap();
            assert!(cm.to_matrix().sub(&want).frobenius_norm() < 1e-12);
            w_by_c.push(eng.finish().totals.w);
        }
        assert!(
            w_by_c[1] < w_by_c[0],
            "c=4 words {} not below c=1 words {}",
            w_by_c[1],
            w_by_c[0]
        );
    }

    #[test]
    fn pass_count_validated() {
        let grid = ProcGrid::contiguous(2, 1).unwrap();
        let mut eng = engine(4, 1 << 15);
        let a = random(4, 4, 9);
        let bd = DistMatrix::from_matrix(&random(4, 4, 10), Layout::Balanced {
            procs: ProcSet::range(0, 4),
        });
        let plan = StreamingLayout::cyclic(grid.clone(), 3);
        assert!(matches!(
            streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan),
            Err(MatmulError::BadPassCount { .. })
        ));
    }

    #[test]
    fn vertical_charge_depends_on_residency() {
        let grid = ProcGrid::contiguous(2, 1).unwrap();
        let a = random(8, 8, 11);
        let b = random(8, 8, 12);
        let mut qs = Vec::new();
        for h in [1u64 << 15, 2u64] {
            let mut eng = engine(4, h);
            let bd =
                DistMatrix::from_matrix(&b, Layout::Balanced { procs: ProcSet::range(0, 4) });
            let plan = StreamingLayout::cyclic(grid.clone(), 1);
            streaming_mm(&mut eng, &replicated(&a, &grid), &bd, &plan).unwrap();
            qs.push(eng.finish().totals.q);
        }
        // Small cache pays the replicated-block stream on top.
        assert_eq!(qs[1] - qs[0], 16);
    }
}
