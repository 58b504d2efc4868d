use std::sync::Arc;

use bsp_engine::{DistMatrix, Engine, Layout, ProcSet};
use dense_kernels::{local_matmul, lu_nopivot_shifted, Matrix};
use par_matmul::par_matmul;

use crate::{DistHouseholder, QrError};

/// Recover the compact reflector form of an explicit matrix `Q` with
/// orthonormal columns.
///
/// With `S_ii = -sign(Q1_ii)`, the sign-shifted factorization
/// `L W = Q1 - S` is strongly nonsingular; setting `U = (Q - E S) W^{-1}`
/// and `T = -W S L^{-T}` yields a lower-trapezoidal `U` with unit `U1 = L`,
/// an upper-triangular `T` with positive diagonal, and
/// `E - U T U1^T = Q S` exactly. The returned sign vector is `S`; callers
/// that need `Q` itself reproduced fold the column signs into `Q` and `R`.
pub fn householder_reconstruct(
    eng: &mut Engine,
    q: &DistMatrix,
    procs: &ProcSet,
    v: f64,
) -> Result<(DistHouseholder, Vec<f64>), QrError> {
    let (m, n) = (q.rows(), q.cols());
    if m < n {
        return Err(QrError::Underdetermined { rows: m, cols: n });
    }
    if procs.is_empty() {
        return Err(QrError::NoProcessors);
    }
    let root = procs.root();

    // Top block and sign matrix at the root.
    let q1 = q.submatrix(0, 0, n, n)?.gather_to(eng, root)?;
    let mut signs: Vec<f64> = (0..n)
        .map(|i| if q1[(i, i)] >= 0.0 { -1.0 } else { 1.0 })
        .collect();
    let lu = {
        let mut charger = eng.charger(root);
        match lu_nopivot_shifted(&q1, &signs, &mut charger) {
            Ok(lu) => lu,
            // A square orthogonal block carries a determinant parity
            // constraint: the product of n nontrivial reflectors has
            // determinant (-1)^n, and an infeasible sign choice surfaces as
            // an exactly singular last pivot. Any sign matrix satisfies the
            // reconstruction identity, so flip the last sign and retry.
            Err(dense_kernels::KernelError::SingularPivot { index, .. }) if index + 1 == n => {
                signs[n - 1] = -signs[n - 1];
                lu_nopivot_shifted(&q1, &signs, &mut charger)?
            }
            Err(e) => return Err(e.into()),
        }
    };

    // T = (-W S) L^{-T}, computed locally on the root.
    let mut ws = lu.u.clone();
    for i in 0..n {
        for j in 0..n {
            ws[(i, j)] *= -signs[j];
        }
    }
    eng.charge(root, (n * n) as u64, 0);
    let t = {
        let mut charger = eng.charger(root);
        local_matmul(&ws, &lu.l_inv.transpose(), &mut charger)?
    };

    // U = (Q - E S) W^{-1} by a parallel product; the shift touches only
    // the top diagonal entries.
    let mut shifted = q.clone();
    for i in 0..n {
        shifted.set(i, i, shifted.get(i, i) - signs[i]);
        eng.charge(shifted.owner(i, i), 1, 0);
    }
    let w_inv = at_root(&lu.u_inv, root, procs);
    let mut u = par_matmul(eng, &shifted, &w_inv, procs, v)?;
    // The top block is the unit-lower LU factor by construction; drop the
    // roundoff above its diagonal so the trapezoidal shape is structural.
    for i in 0..n {
        for j in (i + 1)..n {
            u.set(i, j, 0.0);
        }
    }

    // Contract check: E - U T U1^T must reproduce Q S.
    let u_mat = u.to_matrix();
    let u1 = u_mat.sub_matrix(0, 0, n, n);
    let recon = Matrix::identity_columns(m, n).sub(&dense_kernels::matmul_raw(
        &u_mat,
        &dense_kernels::matmul_raw(&t, &u1.transpose())?,
    )?);
    let mut qs = q.to_matrix();
    for j in 0..n {
        for i in 0..m {
            qs[(i, j)] *= signs[j];
        }
    }
    let residual = recon.sub(&qs).frobenius_norm();
    let bound = 1e3 * f64::EPSILON * (m as f64).sqrt();
    if residual > bound {
        return Err(QrError::ReconstructionResidual { residual, bound });
    }

    let t_dist = at_root(&t, root, procs);
    Ok((DistHouseholder { u, t: t_dist }, signs))
}

/// Wrap a root-resident matrix as a distributed one (all elements owned by
/// the root; later products meter whatever movement they need).
pub(crate) fn at_root(m: &Matrix, root: usize, procs: &ProcSet) -> DistMatrix {
    let owners = Arc::new(vec![root as u32; m.rows() * m.cols()]);
    DistMatrix::from_matrix(m, Layout::Explicit {
        owners,
        procs: procs.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsp_engine::{MachineParams, MemoryPolicy};
    use dense_kernels::{local_qr, matmul_raw, NullSink};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine(p: usize) -> Engine {
        Engine::new(
            MachineParams::new(p, 1 << 24, 1 << 15, 1.0, 10.0, 2.0, 1000.0).unwrap(),
            MemoryPolicy::Warn,
        )
    }

    fn orthonormal(m: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let (hh, _) = local_qr(&a, &mut NullSink).unwrap();
        hh.thin_q()
    }

    #[test]
    fn identity_columns_reconstruct() {
        // Q = E: U1 is unit diagonal, T diagonal, and E - U T U1^T = -E
        // (the stabilizing signs are all -1).
        let mut eng = engine(2);
        let procs = ProcSet::range(0, 2);
        let e = Matrix::identity_columns(6, 3);
        let q = DistMatrix::from_matrix(&e, Layout::Balanced { procs: procs.clone() });
        let (hh, signs) = householder_reconstruct(&mut eng, &q, &procs, 1.0).unwrap();
        assert_eq!(signs, vec![-1.0; 3]);
        let u = hh.u.to_matrix();
        let t = hh.t.to_matrix();
        for i in 0..3 {
            assert!((u[(i, i)].abs() - 1.0).abs() < 1e-14);
            for j in 0..3 {
                if i != j {
                    assert!(u[(i, j)].abs() < 1e-14);
                    assert!(t[(i, j)].abs() < 1e-14);
                }
            }
            assert!(t[(i, i)] > 0.0);
        }
    }

    #[test]
    fn random_q_reproduced_up_to_signs() {
        let mut eng = engine(4);
        let procs = ProcSet::range(0, 4);
        let qm = orthonormal(8, 2, 42);
        let q = DistMatrix::from_matrix(&qm, Layout::Balanced { procs: procs.clone() });
        let (hh, _signs) = householder_reconstruct(&mut eng, &q, &procs, 1.0).unwrap();
        // Compact identity U^T U = T^{-1} + T^{-T}.
        let fac = dense_kernels::HouseholderFactor {
            u: hh.u.to_matrix(),
            t: hh.t.to_matrix(),
        };
        assert!(fac.identity_residual() <= 1e3 * f64::EPSILON * 2.0);
    }

    #[test]
    fn single_reflector_scaling() {
        // n = 1: T is 1x1 and the reflector satisfies T = 2 / (u^T u).
        let mut eng = engine(2);
        let procs = ProcSet::range(0, 2);
        let qm = orthonormal(5, 1, 7);
        let q = DistMatrix::from_matrix(&qm, Layout::Balanced { procs: procs.clone() });
        let (hh, _) = householder_reconstruct(&mut eng, &q, &procs, 1.0).unwrap();
        let u = hh.u.to_matrix();
        let t = hh.t.to_matrix()[(0, 0)];
        let utu = matmul_raw(&u.transpose(), &u).unwrap()[(0, 0)];
        assert!((t * utu - 2.0).abs() < 1e-12);
    }
}
