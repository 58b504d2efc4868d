use bsp_engine::{DistMatrix, Engine, Layout, ProcSet};
use dense_kernels::{local_matmul, local_qr, Matrix};
use par_matmul::par_matmul;

use crate::plan::{floor_pow2, QrTreePlan};
use crate::reconstruct::at_root;
use crate::rect::rect_qr_with_plan;
use crate::QrError;

/// Width at or below which a factorization is done by one processor.
const SEQ_WIDTH: usize = 8;

/// Metered parallel QR of a near-square matrix (`m <= 2n`).
///
/// Substitute base case for the reduction tree: a panelized compact
/// reflector factorization. Each column panel is factorized by a
/// proportional processor subset (recursively through the reduction tree),
/// the trailing matrix is updated by parallel products, and the thin `Q` is
/// assembled by applying the panel reflectors to the identity columns in
/// reverse. Word traffic follows the unreplicated (`delta = 1/2`) bound;
/// replication buys nothing here, which is the documented deviation from
/// the slanted-panel construction.
pub fn square_qr(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
    delta: f64,
) -> Result<(DistMatrix, DistMatrix), QrError> {
    let plan = QrTreePlan::new(a.rows().max(1), a.cols().max(1), procs.len().max(1), delta);
    square_qr_inner(eng, a, procs, &plan)
}

pub(crate) fn square_qr_inner(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
    plan: &QrTreePlan,
) -> Result<(DistMatrix, DistMatrix), QrError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(QrError::Underdetermined { rows: m, cols: n });
    }
    if procs.is_empty() {
        return Err(QrError::NoProcessors);
    }
    if procs.len() == 1 || n <= SEQ_WIDTH {
        return sequential_base(eng, a, procs);
    }

    let p = procs.len();
    let npanels = {
        let target = 1usize << ((p as f64).sqrt().log2().ceil() as u32);
        target.clamp(2, floor_pow2(n / SEQ_WIDTH).max(2))
    };

    let mut working = a.redistribute(eng, Layout::Balanced { procs: procs.clone() })?;
    let mut panels: Vec<(usize, crate::DistHouseholder)> = Vec::new();

    for pj in 0..npanels {
        let c0 = pj * n / npanels;
        let c1 = (pj + 1) * n / npanels;
        let nb = c1 - c0;
        let prows = m - c0;

        let p_panel = floor_pow2((p * nb / n).max(1));
        let subset = procs.take(p_panel.min(p));
        let panel = working.submatrix(c0, c0, prows, nb)?;
        let fact = rect_qr_with_plan(eng, &panel, &subset, plan.delta)?;

        // Panel columns become [R; 0].
        working.write_block(eng, c0, c0, &fact.r)?;
        working.zero_block(c0 + nb, c0, prows - nb, nb);

        // Trailing update: X <- X - U (T^T (U^T X)).
        if c1 < n {
            let v = plan.refinement(m);
            let x = working.submatrix(c0, c1, prows, n - c1)?;
            let s1 = par_matmul(eng, &fact.hh.u.transposed(), &x, procs, v)?;
            let s2 = par_matmul(eng, &fact.hh.t.transposed(), &s1, procs, v)?;
            let s3 = par_matmul(eng, &fact.hh.u, &s2, procs, v)?;
            let s3 = s3.redistribute(eng, x.layout().clone())?;
            let updated = x.sub_local(eng, &s3)?;
            working.write_block(eng, c0, c1, &updated)?;
        }
        panels.push((c0, fact.hh));
    }

    // Assemble thin Q: apply the panel blocks to the identity columns from
    // the last panel back to the first.
    let mut q = DistMatrix::from_matrix(
        &Matrix::identity_columns(m, n),
        Layout::Balanced { procs: procs.clone() },
    );
    let v = plan.refinement(m);
    for (c0, hh) in panels.iter().rev() {
        let sub = q.submatrix(*c0, 0, m - c0, n)?;
        let s1 = par_matmul(eng, &hh.u.transposed(), &sub, procs, v)?;
        let s2 = par_matmul(eng, &hh.t, &s1, procs, v)?;
        let s3 = par_matmul(eng, &hh.u, &s2, procs, v)?;
        let s3 = s3.redistribute(eng, sub.layout().clone())?;
        let updated = sub.sub_local(eng, &s3)?;
        q.write_block(eng, *c0, 0, &updated)?;
    }

    let r = working.submatrix(0, 0, n, n)?;
    Ok((q, r))
}

/// Gather-to-root fallback for a single processor or a narrow matrix.
pub(crate) fn sequential_base(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
) -> Result<(DistMatrix, DistMatrix), QrError> {
    let root = procs.root();
    let (m, n) = (a.rows(), a.cols());
    let am = a.gather_to(eng, root)?;
    eng.note_footprint(root, (2 * m * n + n * n) as u64)?;
    let (q, r) = {
        let mut ch = eng.charger(root);
        let (hh, r) = local_qr(&am, &mut ch)?;
        let n_top = hh.t.rows();
        let u1t = hh.u.sub_matrix(0, 0, n_top, n_top).transpose();
        let tu1t = local_matmul(&hh.t, &u1t, &mut ch)?;
        let utu1t = local_matmul(&hh.u, &tu1t, &mut ch)?;
        (Matrix::identity_columns(m, n).sub(&utu1t), r)
    };
    eng.charge(root, (m * n) as u64, 0);
    let q = at_root(&q, root, procs).redistribute(eng, Layout::Balanced { procs: procs.clone() })?;
    Ok((q, at_root(&r, root, procs)))
}
