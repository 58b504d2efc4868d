use crate::cost::{vertical_charge, CostSink};
use crate::error::KernelError;
use crate::matrix::Matrix;

/// Plain triple-loop product with no cost charging.
pub fn matmul_raw(a: &Matrix, b: &Matrix) -> Result<Matrix, KernelError> {
    if a.cols() != b.rows() {
        return Err(KernelError::DimMismatch {
            ctx: "matmul",
            lhs: (a.rows(), a.cols()),
            rhs: (b.rows(), b.cols()),
        });
    }
    let (m, n, k) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(m, k);
    for i in 0..m {
        for l in 0..n {
            let ail = a[(i, l)];
            if ail == 0.0 {
                continue;
            }
            let brow = b.row(l);
            let crow = &mut c.data_mut()[i * k..(i + 1) * k];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += ail * bv;
            }
        }
    }
    Ok(c)
}

/// `C = A * B`, charging `2mnk` flops and the operand footprint
/// `mn + nk + mk` words of vertical traffic when it exceeds the cache.
pub fn local_matmul(a: &Matrix, b: &Matrix, sink: &mut dyn CostSink) -> Result<Matrix, KernelError> {
    let c = matmul_raw(a, b)?;
    let (m, n, k) = (a.rows() as u64, a.cols() as u64, b.cols() as u64);
    let footprint = m * n + n * k + m * k;
    sink.charge(2 * m * n * k, vertical_charge(footprint, sink.cache_words()));
    Ok(c)
}

/// Compact representation of the orthogonal factor of a QR factorization:
/// `Q_thin = E - U T U1^T`, where `U` is lower trapezoidal, `U1` its top
/// square block, `T` upper triangular and `E` the leading columns of the
/// identity. Satisfies `U^T U = T^{-1} + T^{-T}` up to roundoff.
#[derive(Debug, Clone)]
pub struct HouseholderFactor {
    pub u: Matrix,
    pub t: Matrix,
}

impl HouseholderFactor {
    pub fn reflector_count(&self) -> usize {
        self.u.cols()
    }

    /// Explicit thin orthogonal factor `E - U T U1^T` (rows x cols of `U`).
    pub fn thin_q(&self) -> Matrix {
        let n = self.u.cols();
        let u1 = self.u.sub_matrix(0, 0, n, n);
        let tu1t = matmul_raw(&self.t, &u1.transpose()).expect("shape");
        let utu1t = matmul_raw(&self.u, &tu1t).expect("shape");
        Matrix::identity_columns(self.u.rows(), n).sub(&utu1t)
    }

    /// Apply `Q^T = I - U T^T U^T` to `x` from the left (raw, uncharged).
    pub fn apply_q_transpose(&self, x: &Matrix) -> Result<Matrix, KernelError> {
        let utx = matmul_raw(&self.u.transpose(), x)?;
        let ttutx = matmul_raw(&self.t.transpose(), &utx)?;
        let correction = matmul_raw(&self.u, &ttutx)?;
        Ok(x.sub(&correction))
    }

    /// Apply `Q = I - U T U^T` to `x` from the left (raw, uncharged).
    pub fn apply_q(&self, x: &Matrix) -> Result<Matrix, KernelError> {
        let utx = matmul_raw(&self.u.transpose(), x)?;
        let tutx = matmul_raw(&self.t, &utx)?;
        let correction = matmul_raw(&self.u, &tutx)?;
        Ok(x.sub(&correction))
    }

    /// Frobenius norm of `U^T U - T^{-1} - T^{-T}`.
    pub fn identity_residual(&self) -> f64 {
        let n = self.t.rows();
        let tinv = invert_upper_triangular(&self.t);
        let utu = matmul_raw(&self.u.transpose(), &self.u).expect("shape");
        let mut r = utu;
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] -= tinv[(i, j)] + tinv[(j, i)];
            }
        }
        r.frobenius_norm()
    }
}

pub(crate) fn invert_upper_triangular(t: &Matrix) -> Matrix {
    let n = t.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in (0..n).rev() {
        inv[(j, j)] = 1.0 / t[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in (i + 1)..=j {
                s += t[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / t[(i, i)];
        }
    }
    inv
}

/// Householder QR of an `m x n` matrix with `m >= n`, in compact form.
///
/// Returns the reflector representation and the upper-triangular `R` with
/// `A = Q_thin * R` exactly (up to roundoff; the stable reflector sign choice
/// lives in `R`'s diagonal). Charges `2 m n^2` flops and `mn` vertical words
/// when the operand spills the cache.
pub fn local_qr(
    a: &Matrix,
    sink: &mut dyn CostSink,
) -> Result<(HouseholderFactor, Matrix), KernelError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(KernelError::Underdetermined { rows: m, cols: n });
    }
    let mut work = a.clone();
    let mut u = Matrix::zeros(m, n);
    let mut taus = vec![0.0f64; n];

    for j in 0..n {
        // Build the reflector for column j from the subdiagonal part.
        let mut norm2 = 0.0;
        for i in j..m {
            norm2 += work[(i, j)] * work[(i, j)];
        }
        let norm = norm2.sqrt();
        let head = work[(j, j)];
        if norm == 0.0 {
            u[(j, j)] = 1.0;
            taus[j] = 0.0;
            continue;
        }
        let alpha = if head >= 0.0 { -norm } else { norm };
        let v0 = head - alpha;
        // v normalized so its head is one; tau = 2 / (v^T v) after scaling.
        let mut vtv = 1.0;
        u[(j, j)] = 1.0;
        for i in (j + 1)..m {
            let vi = work[(i, j)] / v0;
            u[(i, j)] = vi;
            vtv += vi * vi;
        }
        let tau = 2.0 / vtv;
        taus[j] = tau;
        work[(j, j)] = alpha;
        for i in (j + 1)..m {
            work[(i, j)] = 0.0;
        }
        // Apply (I - tau v v^T) to the trailing columns.
        for c in (j + 1)..n {
            let mut dot = 0.0;
            for i in j..m {
                dot += u[(i, j)] * work[(i, c)];
            }
            let s = tau * dot;
            for i in j..m {
                let vi = u[(i, j)];
                work[(i, c)] -= s * vi;
            }
        }
    }

    // T from the reflector recurrence: T[0..j, j] = -tau_j T (U^T u_j).
    let mut t = Matrix::zeros(n, n);
    for j in 0..n {
        t[(j, j)] = taus[j];
        if j == 0 || taus[j] == 0.0 {
            continue;
        }
        let mut z = vec![0.0f64; j];
        for k in 0..j {
            let mut dot = 0.0;
            for i in k..m {
                dot += u[(i, k)] * u[(i, j)];
            }
            z[k] = dot;
        }
        for row in 0..j {
            let mut s = 0.0;
            for k in row..j {
                s += t[(row, k)] * z[k];
            }
            t[(row, j)] = -taus[j] * s;
        }
    }

    let r = work.sub_matrix(0, 0, n, n);
    let (mu, nu) = (m as u64, n as u64);
    sink.charge(2 * mu * nu * nu, vertical_charge(mu * nu, sink.cache_words()));
    Ok((HouseholderFactor { u, t }, r))
}
