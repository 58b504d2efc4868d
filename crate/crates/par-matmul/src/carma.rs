use bsp_engine::{DistMatrix, Engine, Layout, ProcSet};
use dense_kernels::local_matmul;

use crate::error::MatmulError;

/// `C = A * B` from any load-balanced layouts over `procs`, by recursive
/// splitting of the largest dimension with processor-set halving, down to a
/// single-processor `local_matmul`. Ties split `m`, then `n`, then `k`.
///
/// `v` is the memory/latency refinement knob of the underlying recursive
/// scheme; it is validated (`v >= 1`) and carried for interface parity, but
/// the simulator's schedule is fixed by the processor count alone.
pub fn par_matmul(
    eng: &mut Engine,
    a: &DistMatrix,
    b: &DistMatrix,
    procs: &ProcSet,
    v: f64,
) -> Result<DistMatrix, MatmulError> {
    if a.cols() != b.rows() {
        return Err(MatmulError::DimMismatch {
            lhs: (a.rows(), a.cols()),
            rhs: (b.rows(), b.cols()),
        });
    }
    if procs.is_empty() {
        return Err(MatmulError::NoProcessors);
    }
    if !(v >= 1.0) {
        return Err(MatmulError::BadRefinement { v });
    }
    multiply(eng, a, b, procs)
}

fn multiply(
    eng: &mut Engine,
    a: &DistMatrix,
    b: &DistMatrix,
    procs: &ProcSet,
) -> Result<DistMatrix, MatmulError> {
    let (m, n, k) = (a.rows(), a.cols(), b.cols());
    if m == 0 || k == 0 {
        return Ok(DistMatrix::zeros(m, k, balanced(procs)));
    }
    if procs.len() == 1 || n == 0 {
        let root = procs.root();
        let single = ProcSet::singleton(root);
        let al = a.redistribute(eng, balanced(&single))?;
        let bl = b.redistribute(eng, balanced(&single))?;
        eng.note_footprint(root, (al.rows() * al.cols() + bl.rows() * bl.cols() + m * k) as u64)?;
        let mut charger = eng.charger(root);
        let c = local_matmul(&al.to_matrix(), &bl.to_matrix(), &mut charger)?;
        return Ok(DistMatrix::from_matrix(&c, balanced(&single)));
    }

    let halves = procs.split(2);
    if m >= n && m >= k {
        // Split rows of A; each half needs all of B.
        let mh = m / 2;
        let tops = a.submatrix(0, 0, mh, n)?;
        let bots = a.submatrix(mh, 0, m - mh, n)?;
        let parts = eng.fork(&halves, |eng, i| -> Result<DistMatrix, MatmulError> {
            let sub = &halves[i];
            let ai = if i == 0 { &tops } else { &bots };
            let ai = ai.redistribute(eng, balanced(sub))?;
            let bi = b.redistribute(eng, balanced(sub))?;
            multiply(eng, &ai, &bi, sub)
        })?;
        Ok(stack_rows(&parts[0], &parts[1], procs))
    } else if n >= k {
        // Split the inner dimension; both halves compute full-size partial
        // products that are summed afterwards.
        let nh = n / 2;
        let al = a.submatrix(0, 0, m, nh)?;
        let ar = a.submatrix(0, nh, m, n - nh)?;
        let bt = b.submatrix(0, 0, nh, k)?;
        let bb = b.submatrix(nh, 0, n - nh, k)?;
        let parts = eng.fork(&halves, |eng, i| -> Result<DistMatrix, MatmulError> {
            let sub = &halves[i];
            let ai = if i == 0 { &al } else { &ar };
            let bi = if i == 0 { &bt } else { &bb };
            let ai = ai.redistribute(eng, balanced(sub))?;
            let bi = bi.redistribute(eng, balanced(sub))?;
            multiply(eng, &ai, &bi, sub)
        })?;
        let first = parts[0].redistribute(eng, balanced(procs))?;
        let second = parts[1].redistribute(eng, first.layout().clone())?;
        Ok(first.add_local(eng, &second)?)
    } else {
        // Split columns of B; each half needs all of A.
        let kh = k / 2;
        let bl = b.submatrix(0, 0, n, kh)?;
        let br = b.submatrix(0, kh, n, k - kh)?;
        let parts = eng.fork(&halves, |eng, i| -> Result<DistMatrix, MatmulError> {
            let sub = &halves[i];
            let bi = if i == 0 { &bl } else { &br };
            let ai = a.redistribute(eng, balanced(sub))?;
            let bi = bi.redistribute(eng, balanced(sub))?;
            multiply(eng, &ai, &bi, sub)
        })?;
        Ok(stack_cols(&parts[0], &parts[1], procs))
    }
}

fn balanced(procs: &ProcSet) -> Layout {
    Layout::Balanced { procs: procs.clone() }
}

/// Concatenate results held on disjoint halves: ownership is inherited per
/// element, so no words move.
fn stack_rows(top: &DistMatrix, bot: &DistMatrix, procs: &ProcSet) -> DistMatrix {
    let rows = top.rows() + bot.rows();
    let cols = top.cols();
    let mut owners = Vec::with_capacity(rows * cols);
    let mut out = DistMatrix::zeros(rows, cols, Layout::Balanced { procs: procs.clone() });
    for i in 0..rows {
        for j in 0..cols {
            let (src, si) = if i < top.rows() { (top, i) } else { (bot, i - top.rows()) };
            out.set(i, j, src.get(si, j));
            owners.push(src.owner(si, j) as u32);
        }
    }
    with_explicit(out, owners, procs)
}

fn stack_cols(left: &DistMatrix, right: &DistMatrix, procs: &ProcSet) -> DistMatrix {
    let rows = left.rows();
    let cols = left.cols() + right.cols();
    let mut owners = Vec::with_capacity(rows * cols);
    let mut out = DistMatrix::zeros(rows, cols, Layout::Balanced { procs: procs.clone() });
    for i in 0..rows {
        for j in 0..cols {
            let (src, sj) = if j < left.cols() { (left, j) } else { (right, j - left.cols()) };
            out.set(i, j, src.get(i, sj));
            owners.push(src.owner(i, sj) as u32);
        }
    }
    with_explicit(out, owners, procs)
}

fn with_explicit(m: DistMatrix, owners: Vec<u32>, procs: &ProcSet) -> DistMatrix {
    let mut d = DistMatrix::zeros(m.rows(), m.cols(), Layout::Explicit {
        owners: std::sync::Arc::new(owners),
        procs: procs.clone(),
    });
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            d.set(i, j, m.get(i, j));
        }
    }
    d
}
