use std::collections::BTreeMap;

use bsp_engine::{Engine, ProcId, ProcSet};
use dense_kernels::{local_matmul, local_qr, Matrix};

use crate::bulge::{bulge_chase_count, BulgeIndexSet};
use crate::dist_band::DistBand;
use crate::error::ReductionError;

/// Halve the bandwidth of a thin band (`b <= n/p`) with processor-local
/// bulge chases.
///
/// Every processor owns a contiguous column block. Bulges are batched by
/// the block their first panel starts in; at pipeline step `t`, block `B`
/// processes batch `t - B` entirely within its columns plus a `4b` halo,
/// then hands the pushed-out bulge state to its successors in one exchange.
/// The steps therefore number `2p - 1` and every chase is a sequential QR
/// plus a two-sided window update charged to its block's processor. A
/// tridiagonal input (`b = 1`) passes through unchanged.
pub fn ca_br_halve(
    eng: &mut Engine,
    band: &DistBand,
    procs: &ProcSet,
) -> Result<DistBand, ReductionError> {
    let n = band.order();
    let b = band.bandwidth();
    if b <= 1 {
        return Ok(band.clone());
    }
    if b % 2 != 0 {
        return Err(ReductionError::BadGeometry {
            ctx: format!("cannot halve odd bandwidth {b}"),
        });
    }
    let p = procs.len();
    if b * p > n {
        return Err(ReductionError::BadGeometry {
            ctx: format!("band halving needs b <= n/p (b={b}, n={n}, p={p})"),
        });
    }
    let h = b / 2;
    let scale = band.to_dense().frobenius_norm();

    // One contiguous column block per processor. A whole batch traverses a
    // block per step, so its bulges end the step stacked in the halo, each
    // smearing its predecessor's pending fill; transient entries can reach
    // a distance of about twice the block width plus the band before the
    // successor block cleans them (the chase transforms commute, so the
    // final band is unaffected).
    let block_width = n.div_ceil(p);
    let headroom = (2 * b + 2 * block_width).min(n.saturating_sub(1));
    let owner: Vec<ProcId> = (0..n).map(|c| procs.get(c * p / n)).collect();
    let block_of = |c: usize| c * p / n;
    let block_end = |blk: usize| (blk + 1) * n / p;
    let mut work = band.remap_columns(eng, owner.clone(), headroom)?;

    // Chases keyed by (block, batch); the batch of a bulge is the block its
    // opening panel lives in.
    let bulges = n / h - 1;
    let mut assigned: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for i in 1..=bulges {
        let batch = block_of((i - 1) * h);
        for j in 1..=bulge_chase_count(n, b, h, i) {
            let bs = BulgeIndexSet::new(n, b, h, i, j);
            assigned
                .entry((block_of(bs.o_qr_c), batch))
                .or_default()
                .push((i, j));
        }
    }

    // Pipeline: block B runs batch t - B at step t. Within a step, blocks
    // execute in descending order, the serialization of the in-step
    // pipeline (earlier batches are ahead of later ones).
    for t in 0..(2 * p).saturating_sub(1) {
        let mut flows: BTreeMap<(ProcId, ProcId), u64> = BTreeMap::new();
        for blk in (0..p).rev() {
            let Some(batch) = t.checked_sub(blk) else { continue };
            if batch > blk {
                continue;
            }
            let Some(chases) = assigned.get(&(blk, batch)) else { continue };
            let proc = procs.get(blk);
            for &(i, j) in chases {
                let bs = BulgeIndexSet::new(n, b, h, i, j);
                chase_local(eng, &mut work, &bs, h, proc)?;
            }
            // Handoff: the halo columns this block may have written belong
            // to its successors.
            let lo = block_end(blk).min(n);
            let hi = (lo + 4 * b).min(n);
            for c in lo..hi {
                let dst = procs.get(block_of(c));
                if dst != proc {
                    let depth = headroom.min(n - 1 - c) as u64 + 1;
                    *flows.entry((proc, dst)).or_insert(0) += depth;
                }
            }
        }
        if !flows.is_empty() {
            eng.exchange_counts(flows.into_iter().map(|((f, s), w)| (f, s, w)))?;
        }
    }

    let bound = 1e3 * f64::EPSILON * (n as f64) * scale.max(1e-300);
    work.truncate(bound, h)
}

/// One chase executed by a single processor on a dense copy of its window:
/// panel QR, then the two-sided reflector application across the window.
fn chase_local(
    eng: &mut Engine,
    work: &mut DistBand,
    bs: &BulgeIndexSet,
    h: usize,
    proc: ProcId,
) -> Result<(), ReductionError> {
    let w = h.min(bs.n_r);
    if w == 0 {
        return Ok(());
    }
    // The window must span every stored entry of the mixed rows in both
    // directions, including fill smeared out to the working headroom.
    let headroom = 4 * (2 * h);
    let lo = bs.qr_rows().start.saturating_sub(headroom);
    let hi = (bs.qr_rows().end + headroom).min(work.order());
    let span = hi - lo;

    let mut win = Matrix::zeros(span, span);
    for i in 0..span {
        for j in 0..span {
            win[(i, j)] = work.get(lo + i, lo + j);
        }
    }
    eng.note_footprint(proc, (span * (2 * work.bandwidth() + 1)) as u64)?;

    let qr0 = bs.o_qr_r - lo;
    let pc0 = bs.o_qr_c - lo;
    let (hh, r) = {
        let mut ch = eng.charger(proc);
        let panel = win.sub_matrix(qr0, pc0, bs.n_r, w);
        local_qr(&panel, &mut ch)?
    };

    // Two-sided application of G = I - U T U^T on the rows and columns
    // holding the panel.
    {
        let mut ch = eng.charger(proc);
        let rows = win.sub_matrix(qr0, 0, bs.n_r, span);
        let ut_x = local_matmul(&hh.u.transpose(), &rows, &mut ch)?;
        let tt_ut_x = local_matmul(&hh.t.transpose(), &ut_x, &mut ch)?;
        let corr = local_matmul(&hh.u, &tt_ut_x, &mut ch)?;
        win.set_sub_matrix(qr0, 0, &rows.sub(&corr));

        let cols = win.sub_matrix(0, qr0, span, bs.n_r);
        let x_u = local_matmul(&cols, &hh.u, &mut ch)?;
        let x_u_t = local_matmul(&x_u, &hh.t, &mut ch)?;
        let corr = local_matmul(&x_u_t, &hh.u.transpose(), &mut ch)?;
        win.set_sub_matrix(0, qr0, &cols.sub(&corr));
        ch.charge(2 * (bs.n_r * span) as u64, 0);
    }

    // The panel triangularizes exactly.
    for i in 0..bs.n_r {
        for j in 0..w {
            let v = if i < w && i <= j { r[(i, j)] } else { 0.0 };
            win[(qr0 + i, pc0 + j)] = v;
            win[(pc0 + j, qr0 + i)] = v;
        }
    }

    // Write the window back; cross-block words are charged by the step
    // handoff, local writes are free.
    for i in 0..span {
        for j in 0..=i {
            work.set(lo + i, lo + j, win[(i, j)]);
        }
    }
    Ok(())
}
