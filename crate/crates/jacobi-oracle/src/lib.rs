//! Cyclic Jacobi eigenvalue reference implementation.
//!
//! This crate exists to cross-check the banded eigensolver stack and is kept
//! deliberately self-contained: it depends on nothing else in the workspace
//! and shares no factorization or update code with the solver path. Input is
//! a dense symmetric matrix as a row-major slice.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum JacobiError {
    /// Slice length is not n*n.
    BadLength { len: usize, n: usize },
    /// Input deviates from symmetry by more than the relative tolerance.
    NotSymmetric { max_deviation: f64 },
    /// Off-diagonal mass failed to vanish within the sweep cap.
    NoConvergence { sweeps: usize },
}

impl fmt::Display for JacobiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadLength { len, n } => write!(f, "expected {n}x{n} = {} entries, got {len}", n * n),
            Self::NotSymmetric { max_deviation } => {
                write!(f, "matrix not symmetric (max deviation {max_deviation:e})")
            }
            Self::NoConvergence { sweeps } => write!(f, "no convergence after {sweeps} sweeps"),
        }
    }
}

impl std::error::Error for JacobiError {}

const MAX_SWEEPS: usize = 100;
const SYMMETRY_RTOL: f64 = 1e-12;

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations iterated until the off-diagonal Frobenius norm falls below
/// machine epsilon times the matrix norm.
pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>, JacobiError> {
    if a.len() != n * n {
        return Err(JacobiError::BadLength { len: a.len(), n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_dev = max_dev.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    if max_dev > SYMMETRY_RTOL * scale.max(1.0) {
        return Err(JacobiError::NotSymmetric { max_deviation: max_dev });
    }

    let mut w = a.to_vec();
    // Work on the symmetrized copy so tiny input asymmetry cannot bias sweeps.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (w[i * n + j] + w[j * n + i]);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }

    let norm = frobenius(&w);
    let target = f64::EPSILON * norm;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&w, n) <= target {
            let mut eig: Vec<f64> = (0..n).map(|i| w[i * n + i]).collect();
            eig.sort_by(f64::total_cmp);
            return Ok(eig);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = w[p * n + p];
                let aqq = w[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    let new_p = c * akp - s * akq;
                    let new_q = s * akp + c * akq;
                    w[k * n + p] = new_p;
                    w[p * n + k] = new_p;
                    w[k * n + q] = new_q;
                    w[q * n + k] = new_q;
                }
                w[p * n + p] = app - t * apq;
                w[q * n + q] = aqq + t * apq;
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
            }
        }
    }
    // One final accept check: quadratic convergence usually lands well below
    // the target before the cap, so reaching here is a genuine failure.
    if off_diagonal_norm(&w, n) <= target {
        let mut eig: Vec<f64> = (0..n).map(|i| w[i * n + i]).collect();
        eig.sort_by(f64::total_cmp);
        return Ok(eig);
    }
    Err(JacobiError::NoConvergence { sweeps: MAX_SWEEPS })
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_sorted() {
        let a = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(jacobi_eigenvalues(&a, 3).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_exact() {
        let a = [2.0, 1.0, 1.0, 2.0];
        let eig = jacobi_eigenvalues(&a, 2).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-14);
        assert!((eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix() {
        let a = vec![0.0; 16];
        assert_eq!(jacobi_eigenvalues(&a, 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = [1.0, 2.0, 0.5, 1.0];
        assert!(matches!(
            jacobi_eigenvalues(&a, 2),
            Err(JacobiError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn trace_and_product_invariants() {
        // Deterministic pseudo-random symmetric matrix, checked against
        // trace (sum of eigenvalues) and Frobenius norm (sum of squares).
        let n = 12;
        let mut a = vec![0.0f64; n * n];
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let eig = jacobi_eigenvalues(&a, n).unwrap();
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let eig_sum: f64 = eig.iter().sum();
        assert!((trace - eig_sum).abs() < 1e-12);
        let frob2: f64 = a.iter().map(|v| v * v).sum();
        let eig2: f64 = eig.iter().map(|v| v * v).sum();
        assert!((frob2 - eig2).abs() < 1e-11);
    }
}
