use crate::cost::{vertical_charge, CostSink};
use crate::error::KernelError;
use crate::matrix::Matrix;

/// Output of the sign-shifted non-pivoted LU factorization: `L Uu = Q1 - S`
/// with unit-lower `L` and upper `Uu`, plus both triangular inverses.
#[derive(Debug, Clone)]
pub struct LuFactors {
    pub l: Matrix,
    pub u: Matrix,
    pub l_inv: Matrix,
    pub u_inv: Matrix,
}

/// Non-pivoted LU of `Q1 - S`, where `S` is the diagonal sign matrix given
/// as a slice of +-1 entries. The construction is intended for orthonormal
/// `Q1` with `S_ii = -sign(Q1_ii)`, which makes the shifted matrix strongly
/// nonsingular; a pivot collapsing below roundoff scale is reported as a
/// reconstruction failure.
pub fn lu_nopivot_shifted(
    q1: &Matrix,
    s: &[f64],
    sink: &mut dyn CostSink,
) -> Result<LuFactors, KernelError> {
    let n = q1.rows();
    if q1.cols() != n || s.len() != n {
        return Err(KernelError::BadShape {
            ctx: "lu_nopivot_shifted requires square Q1 and matching sign vector",
        });
    }
    let mut a = q1.clone();
    for i in 0..n {
        a[(i, i)] -= s[i];
    }
    let pivot_tol = 1e3 * f64::EPSILON * (n as f64) * a.max_abs().max(1.0);

    let mut l = Matrix::identity(n);
    let mut u = Matrix::zeros(n, n);
    for k in 0..n {
        for j in k..n {
            let mut sum = 0.0;
            for t in 0..k {
                sum += l[(k, t)] * u[(t, j)];
            }
            u[(k, j)] = a[(k, j)] - sum;
        }
        let pivot = u[(k, k)];
        if pivot.abs() <= pivot_tol {
            return Err(KernelError::SingularPivot { index: k, pivot });
        }
        for i in (k + 1)..n {
            let mut sum = 0.0;
            for t in 0..k {
                sum += l[(i, t)] * u[(t, k)];
            }
            l[(i, k)] = (a[(i, k)] - sum) / pivot;
        }
    }

    let l_inv = invert_unit_lower(&l);
    let u_inv = crate::qr::invert_upper_triangular(&u);

    let nu = n as u64;
    sink.charge(
        2 * nu * nu * nu / 3 + nu * nu,
        vertical_charge(nu * nu, sink.cache_words()),
    );
    Ok(LuFactors { l, u, l_inv, u_inv })
}

fn invert_unit_lower(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::identity(n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s;
        }
    }
    inv
}
