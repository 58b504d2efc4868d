use std::sync::Arc;

use bsp_engine::{DistMatrix, Engine, Layout, ProcSet};
use par_matmul::par_matmul;

use crate::plan::{floor_pow2, QrTreePlan};
use crate::reconstruct::householder_reconstruct;
use crate::square::{sequential_base, square_qr_inner};
use crate::{DistHouseholder, QrError};

/// Result of a parallel rectangular QR: `A = Q R` with `Q = E - U T U1^T`
/// exactly (reflector signs folded into `Q` and `R`).
#[derive(Debug, Clone)]
pub struct RectQr {
    pub q: DistMatrix,
    pub r: DistMatrix,
    pub hh: DistHouseholder,
}

/// Binary reduction-tree QR of an `m x n` matrix (`m >= n`) in any
/// load-balanced layout.
///
/// Rows are padded with zeros until `m/n` is a power of two (stripped from
/// the outputs) and the processor count rounds down to a power of two. Row
/// pieces are factorized on disjoint subsets inside a shared-superstep fork,
/// the stacked R factors recurse on the full set, and each piece's thin
/// factor is recombined by a parallel product. The compact reflector form
/// is recovered at the top by Householder reconstruction.
pub fn rect_qr(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
    delta: f64,
) -> Result<RectQr, QrError> {
    rect_qr_with_plan(eng, a, procs, delta)
}

pub(crate) fn rect_qr_with_plan(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
    delta: f64,
) -> Result<RectQr, QrError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(QrError::Underdetermined { rows: m, cols: n });
    }
    if procs.is_empty() {
        return Err(QrError::NoProcessors);
    }
    if procs.len() == 1 || n == 0 {
        return local_full(eng, a, procs);
    }

    let active = procs.take(floor_pow2(procs.len()));
    let ratio_exp = ((m as f64 / n as f64).log2().ceil()).max(0.0) as u32;
    let m_pad = n << ratio_exp;
    let padded = pad_rows(a, m_pad, &active);
    let plan = QrTreePlan::new(m_pad, n, active.len(), delta);

    let (q_raw, r_raw) = rect_tree(eng, &padded, &active, &plan)?;
    let q_stripped = q_raw.submatrix(0, 0, m, n)?;

    let (hh, signs) = householder_reconstruct(eng, &q_stripped, &active, plan.refinement(m_pad))?;
    let q = q_stripped.scale_columns(eng, &signs);
    let r = r_raw.scale_rows(eng, &signs);

    #[cfg(debug_assertions)]
    verify_node(&a.to_matrix(), &q.to_matrix(), &r.to_matrix());

    Ok(RectQr { q, r, hh })
}

/// The recursion: returns (thin Q, R) without reflector reconstruction.
fn rect_tree(
    eng: &mut Engine,
    a: &DistMatrix,
    procs: &ProcSet,
    plan: &QrTreePlan,
) -> Result<(DistMatrix, DistMatrix), QrError> {
    let (m, n) = (a.rows(), a.cols());
    let out = if procs.len() == 1 {
        sequential_base(eng, a, procs)?
    } else if m <= 2 * n {
        let base = procs.take(procs.len().min(plan.q_max));
        square_qr_inner(eng, a, &base, plan)?
    } else {
        let r_cnt = plan.branching(m, procs.len());
        let subsets = procs.split(r_cnt);
        let piece_rows = m / r_cnt;

        let mut pieces = Vec::with_capacity(r_cnt);
        for i in 0..r_cnt {
            pieces.push(Some(a.submatrix(i * piece_rows, 0, piece_rows, n)?));
        }
        let factored = eng.fork(&subsets, |eng, i| -> Result<_, QrError> {
            let sub = &subsets[i];
            let piece = pieces[i]
                .take()
                .expect("piece consumed once")
                .redistribute(eng, Layout::Balanced { procs: sub.clone() })?;
            rect_tree(eng, &piece, sub, plan)
        })?;

        let rs: Vec<&DistMatrix> = factored.iter().map(|(_, r)| r).collect();
        let stacked = DistMatrix::vconcat_inherit(&rs, procs);
        let (z, r_final) = rect_tree(eng, &stacked, procs, plan)?;

        let v = plan.refinement(m);
        let mut zs = Vec::with_capacity(r_cnt);
        for i in 0..r_cnt {
            zs.push(Some(z.submatrix(i * n, 0, n, n)?));
        }
        let ws: Vec<&DistMatrix> = factored.iter().map(|(w, _)| w).collect();
        let qs = eng.fork(&subsets, |eng, i| -> Result<_, QrError> {
            let sub = &subsets[i];
            let zi = zs[i]
                .take()
                .expect("z piece consumed once")
                .redistribute(eng, Layout::Balanced { procs: sub.clone() })?;
            Ok(par_matmul(eng, ws[i], &zi, sub, v)?)
        })?;
        let parts: Vec<&DistMatrix> = qs.iter().collect();
        (DistMatrix::vconcat_inherit(&parts, procs), r_final)
    };

    #[cfg(debug_assertions)]
    verify_node(&a.to_matrix(), &out.0.to_matrix(), &out.1.to_matrix());

    Ok(out)
}

/// Single-processor path: sequential factorization plus the native compact
/// form (no sign adjustment needed).
fn local_full(eng: &mut Engine, a: &DistMatrix, procs: &ProcSet) -> Result<RectQr, QrError> {
    let root = procs.root();
    let am = a.gather_to(eng, root)?;
    let (hh, q, r) = {
        let mut ch = eng.charger(root);
        let (hh, r) = dense_kernels::local_qr(&am, &mut ch)?;
        let q = hh.thin_q();
        (hh, q, r)
    };
    eng.charge(
        root,
        2 * (a.rows() * a.cols() * a.cols()) as u64 + (a.rows() * a.cols()) as u64,
        0,
    );
    let single = ProcSet::singleton(root);
    let wrap = |m: &dense_kernels::Matrix| {
        DistMatrix::from_matrix(m, Layout::Balanced { procs: single.clone() })
    };
    Ok(RectQr {
        q: wrap(&q),
        r: wrap(&r),
        hh: DistHouseholder {
            u: wrap(&hh.u),
            t: wrap(&hh.t),
        },
    })
}

/// Append zero rows, keeping original owners and assigning pad rows round
/// robin; zeros materialize locally, so nothing moves.
fn pad_rows(a: &DistMatrix, m_pad: usize, procs: &ProcSet) -> DistMatrix {
    let (m, n) = (a.rows(), a.cols());
    if m_pad == m {
        return a.clone();
    }
    let mut owners = Vec::with_capacity(m_pad * n);
    let mut out = DistMatrix::zeros(m_pad, n, Layout::Balanced { procs: procs.clone() });
    for i in 0..m {
        for j in 0..n {
            out.set(i, j, a.get(i, j));
            owners.push(a.owner(i, j) as u32);
        }
    }
    for e in m * n..m_pad * n {
        owners.push(procs.get(e % procs.len()) as u32);
    }
    let mut padded = DistMatrix::zeros(m_pad, n, Layout::Explicit {
        owners: Arc::new(owners),
        procs: procs.clone(),
    });
    for i in 0..m {
        for j in 0..n {
            padded.set(i, j, out.get(i, j));
        }
    }
    padded
}

#[cfg(debug_assertions)]
fn verify_node(a: &dense_kernels::Matrix, q: &dense_kernels::Matrix, r: &dense_kernels::Matrix) {
    use dense_kernels::{matmul_raw, Matrix};
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return;
    }
    let resid = a.sub(&matmul_raw(q, r).unwrap()).frobenius_norm();
    let bound = 1e3 * f64::EPSILON * ((m * n) as f64).sqrt() * a.frobenius_norm().max(1e-300);
    debug_assert!(resid <= bound, "tree node residual {resid:e} > {bound:e}");
    let orth = matmul_raw(&q.transpose(), q)
        .unwrap()
        .sub(&Matrix::identity(n))
        .frobenius_norm();
    debug_assert!(orth <= 1e3 * f64::EPSILON * n as f64, "tree node orthogonality {orth:e}");
}
