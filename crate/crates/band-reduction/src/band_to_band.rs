use bsp_engine::{Engine, Layout, ProcId, ProcSet};
use par_matmul::par_matmul;
use par_qr::rect_qr;

use crate::bulge::{bulge_chase_count, BulgeIndexSet};
use crate::dist_band::DistBand;
use crate::error::ReductionError;

/// Reduce a banded symmetric matrix from half-bandwidth `b` to `b/k` by
/// pipelined parallel bulge chasing.
///
/// Group `j` of `pb/n` processors owns column block `j` and performs chase
/// `j` of every bulge. A new panel is eliminated once the previous bulge
/// has been chased twice, so chases `(i, j)` with equal `2i + j` run
/// concurrently: each phase is a fork whose branches share supersteps.
/// The spectrum is preserved; entries outside the target band must vanish
/// up to roundoff before the result is truncated.
pub fn band_to_band(
    eng: &mut Engine,
    band: &DistBand,
    procs: &ProcSet,
    k: usize,
    delta: f64,
) -> Result<DistBand, ReductionError> {
    let n = band.order();
    let b = band.bandwidth();
    let p = procs.len();
    validate(n, b, k, p, delta)?;
    let h = b / k;
    let scale = band.to_dense().frobenius_norm();

    // Column block j lives in group j; chases spread over the group.
    let p_hat = (p * b / n).max(1);
    let n_groups = n / b;
    let groups: Vec<ProcSet> = (0..n_groups)
        .map(|g| ProcSet::new(procs.ids()[g * p_hat..(g + 1) * p_hat].to_vec()))
        .collect();
    let owner: Vec<ProcId> = (0..n)
        .map(|c| {
            let g = c / b;
            groups[g].get((c % b) * p_hat / b)
        })
        .collect();
    let work = band.remap_columns(eng, owner, 2 * b)?;
    let work_cell = std::cell::RefCell::new(work);

    // QR processor share per chase, from the stage exponent.
    let p_bar = {
        let raw = p as f64 * b as f64 / (n as f64 * (k as f64).powf((1.0 - delta) / delta));
        let mut v = 1usize;
        while v * 2 <= p_hat && (v * 2) as f64 <= raw {
            v *= 2;
        }
        v
    };

    let bulges = n / h - 1;
    let max_phase = (1..=bulges)
        .map(|i| 2 * i + bulge_chase_count(n, b, h, i))
        .max()
        .unwrap_or(0);
    for phase in 3..=max_phase {
        let mut members = Vec::new();
        for i in 1..=bulges {
            if phase < 2 * i + 1 {
                continue;
            }
            let j = phase - 2 * i;
            if j >= 1 && j <= bulge_chase_count(n, b, h, i) {
                members.push((i, j));
            }
        }
        if members.is_empty() {
            continue;
        }
        let member_groups: Vec<ProcSet> = members.iter().map(|&(_, j)| groups[j - 1].clone()).collect();
        let sets: Vec<BulgeIndexSet> = members
            .iter()
            .map(|&(i, j)| BulgeIndexSet::new(n, b, h, i, j))
            .collect();
        // Mutable access to the shared band is serialized branch by branch;
        // same-phase chases touch disjoint windows.
        eng.fork(&member_groups, |eng, idx| -> Result<(), ReductionError> {
            let mut guard = work_cell.borrow_mut();
            chase_distributed(eng, &mut guard, &sets[idx], &member_groups[idx], p_bar, h, delta)
        })?;
    }

    let bound = 1e3 * f64::EPSILON * (n as f64) * scale.max(1e-300);
    work_cell.into_inner().truncate(bound, h)
}

fn validate(n: usize, b: usize, k: usize, p: usize, delta: f64) -> Result<(), ReductionError> {
    if k < 2 || b % k != 0 {
        return Err(ReductionError::BadGeometry {
            ctx: format!("reduction factor k={k} must be >= 2 and divide b={b}"),
        });
    }
    if n % b != 0 {
        return Err(ReductionError::BadGeometry {
            ctx: format!("bandwidth {b} must divide the order {n}"),
        });
    }
    if b * p < n {
        return Err(ReductionError::BadGeometry {
            ctx: format!("band_to_band needs b >= n/p (b={b}, n={n}, p={p})"),
        });
    }
    let k_cap = 1.0 + (p as f64).powf(2.0 - 3.0 * delta);
    if k as f64 > k_cap + 1e-9 {
        return Err(ReductionError::BadGeometry {
            ctx: format!("k={k} exceeds the pipeline cap {k_cap:.2}"),
        });
    }
    Ok(())
}

/// One bulge chase: panel QR on the group's leading processors, then the
/// two-sided window update through the aggregated `V` form.
fn chase_distributed(
    eng: &mut Engine,
    work: &mut DistBand,
    bs: &BulgeIndexSet,
    group: &ProcSet,
    p_bar: usize,
    h: usize,
    delta: f64,
) -> Result<(), ReductionError> {
    let w = h.min(bs.n_r);
    if w == 0 {
        return Ok(());
    }
    let qr_rows = bs.qr_rows();
    let qr_cols = bs.qr_cols(h);
    let up_cols = bs.up_cols();
    let qr_set = group.take(p_bar);
    let v_ref = 1.0;

    let panel = work.extract_window(
        eng,
        qr_rows.clone(),
        qr_cols.clone(),
        Layout::Balanced { procs: qr_set.clone() },
    )?;
    let fact = rect_qr(eng, &panel, &qr_set, delta)?;

    // Panel becomes [R; 0] (mirrored into the upper triangle).
    work.write_window(
        eng,
        qr_rows.start..qr_rows.start + w,
        qr_cols.clone(),
        &fact.r,
    )?;
    for i in (qr_rows.start + w)..qr_rows.end {
        for j in qr_cols.clone() {
            work.set(i, j, 0.0);
        }
    }

    // W = B[up, qr] U T, V = -W.
    let up_block = work.extract_window(
        eng,
        up_cols.clone(),
        qr_rows.clone(),
        Layout::Balanced { procs: group.clone() },
    )?;
    let s1 = par_matmul(eng, &up_block, &fact.hh.u, group, v_ref)?;
    let w_mat = par_matmul(eng, &s1, &fact.hh.t, group, v_ref)?;
    let mut v_mat = w_mat.scale_local(eng, -1.0);

    // Symmetric-overlap correction:
    // V[I_v, :] += (1/2) U (T^T (U^T W[I_v, :])).
    let vr = bs.v_rows();
    let w_slice = w_mat.submatrix(vr.start, 0, bs.n_r, w)?;
    let s2 = par_matmul(eng, &fact.hh.u.transposed(), &w_slice, group, v_ref)?;
    let s3 = par_matmul(eng, &fact.hh.t.transposed(), &s2, group, v_ref)?;
    let s4 = par_matmul(eng, &fact.hh.u, &s3, group, v_ref)?;
    let half = s4.scale_local(eng, 0.5);
    let cur_slice = v_mat.submatrix(vr.start, 0, bs.n_r, w)?;
    let half = half.redistribute(eng, cur_slice.layout().clone())?;
    let new_slice = cur_slice.add_local(eng, &half)?;
    v_mat.write_block(eng, vr.start, 0, &new_slice)?;

    // B[qr, up] += U V^T, with the transposed term added on the symmetric
    // overlap so the mirrored write realizes both reflections.
    let uvt = par_matmul(eng, &fact.hh.u, &v_mat.transposed(), group, v_ref)?;
    let cur = work.extract_window(
        eng,
        qr_rows.clone(),
        up_cols.clone(),
        Layout::Balanced { procs: group.clone() },
    )?;
    let uvt = uvt.redistribute(eng, cur.layout().clone())?;
    let mut updated = cur.add_local(eng, &uvt)?;

    let inter_lo = qr_rows.start.max(up_cols.start);
    let inter_hi = qr_rows.end.min(up_cols.end);
    if inter_lo < inter_hi {
        let mut adds: u64 = 0;
        for gi in inter_lo..inter_hi {
            for gj in inter_lo..inter_hi {
                let v = uvt.get(gj - qr_rows.start, gi - up_cols.start);
                let (r, c) = (gi - qr_rows.start, gj - up_cols.start);
                updated.set(r, c, updated.get(r, c) + v);
                adds += 1;
            }
        }
        // Overlap adds are spread over the group like the rest of the block.
        let share = adds / group.len() as u64 + 1;
        for &proc in group.ids() {
            eng.charge(proc, share, 0);
        }
    }
    // The mirrored reflection costs the same adds again.
    for (proc, count) in updated.per_proc_counts(eng.p()).iter().enumerate() {
        if *count > 0 {
            eng.charge(proc, *count, 0);
        }
    }
    work.write_window(eng, qr_rows.clone(), up_cols.clone(), &updated)?;

    let footprint: u64 = ((bs.n_c + bs.n_r) * (bs.n_r + w)) as u64 / group.len() as u64 + 1;
    for &proc in group.ids() {
        eng.note_footprint(proc, footprint)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsp_engine::{MachineParams, MemoryPolicy};
    use dense_kernels::{BandMatrix, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine(p: usize) -> Engine {
        Engine::new(
            MachineParams::new(p, 1 << 24, 1 << 15, 1.0, 10.0, 2.0, 1000.0).unwrap(),
            MemoryPolicy::Warn,
        )
    }

    fn random_band(n: usize, b: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut band = BandMatrix::zeros(n, b);
        for d in 0..=b {
            for j in 0..(n - d) {
                band.set(j + d, j, rng.gen_range(-1.0..1.0));
            }
        }
        band
    }

    fn eigs(m: &Matrix) -> Vec<f64> {
        jacobi_oracle::jacobi_eigenvalues(m.data(), m.rows()).unwrap()
    }

    #[test]
    fn halves_bandwidth_and_preserves_spectrum() {
        let (n, b) = (16, 4);
        let bm = random_band(n, b, 3);
        let reference = eigs(&bm.to_dense());
        let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let procs = ProcSet::range(0, 4);
        let mut eng = engine(4);
        let src = DistBand::from_band_matrix(&bm, b, DistBand::block_columns(n, &procs));
        let out = band_to_band(&mut eng, &src, &procs, 2, 0.5).unwrap();
        assert_eq!(out.bandwidth(), 2);
        let dense = out.to_dense();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) > 2 {
                    assert_eq!(dense[(i, j)], 0.0, "({i},{j})");
                }
            }
        }
        let got = eigs(&dense);
        for (g, want) in got.iter().zip(&reference) {
            assert!((g - want).abs() <= 1e-10 * norm, "{g} vs {want}");
        }
    }

    #[test]
    fn thin_input_is_a_near_noop() {
        // Input already at the target bandwidth (zeros below h): panels are
        // already triangular, the spectrum is untouched.
        let (n, b, h) = (16usize, 4usize, 2usize);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut bm = BandMatrix::zeros(n, b);
        for d in 0..=h {
            for j in 0..(n - d) {
                bm.set(j + d, j, rng.gen_range(-1.0..1.0));
            }
        }
        let reference = eigs(&bm.to_dense());
        let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let procs = ProcSet::range(0, 4);
        let mut eng = engine(4);
        let src = DistBand::from_band_matrix(&bm, b, DistBand::block_columns(n, &procs));
        let out = band_to_band(&mut eng, &src, &procs, 2, 0.5).unwrap();
        let got = eigs(&out.to_dense());
        for (g, want) in got.iter().zip(&reference) {
            assert!((g - want).abs() <= 1e-10 * norm);
        }
    }

    #[test]
    fn quarter_reduction_with_k_equal_two_twice() {
        // Two k = 2 stages: 8 -> 4 -> 2 on a 32-point band.
        let (n, b) = (32, 8);
        let bm = random_band(n, b, 11);
        let reference = eigs(&bm.to_dense());
        let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let procs = ProcSet::range(0, 8);
        let mut eng = engine(8);
        let src = DistBand::from_band_matrix(&bm, b, DistBand::block_columns(n, &procs));
        let mid = band_to_band(&mut eng, &src, &procs, 2, 0.5).unwrap();
        let mid_eigs = eigs(&mid.to_dense());
        for (g, want) in mid_eigs.iter().zip(&reference) {
            assert!((g - want).abs() <= 1e-10 * norm);
        }
        let fin = band_to_band(&mut eng, &mid, &procs, 2, 0.5).unwrap();
        assert_eq!(fin.bandwidth(), 2);
        let got = eigs(&fin.to_dense());
        for (g, want) in got.iter().zip(&reference) {
            assert!((g - want).abs() <= 1e-10 * norm);
        }
    }

    #[test]
    fn geometry_validation() {
        let procs = ProcSet::range(0, 2);
        let mut eng = engine(2);
        let bm = random_band(16, 4, 1);
        let src = DistBand::from_band_matrix(&bm, 4, DistBand::block_columns(16, &procs));
        // k does not divide b.
        assert!(matches!(
            band_to_band(&mut eng, &src, &procs, 3, 0.5),
            Err(ReductionError::BadGeometry { .. })
        ));
        // b < n/p.
        let thin = random_band(16, 2, 2);
        let src = DistBand::from_band_matrix(&thin, 2, DistBand::block_columns(16, &procs));
        assert!(matches!(
            band_to_band(&mut eng, &src, &procs, 2, 0.5),
            Err(ReductionError::BadGeometry { .. })
        ));
    }
}
