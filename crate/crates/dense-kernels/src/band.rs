use crate::cost::{vertical_charge, CostSink};
use crate::error::KernelError;
use crate::matrix::Matrix;

/// Symmetric banded matrix stored as its main diagonal plus `b` subdiagonals.
///
/// `diag(d)[j] = A[j + d][j]` for `d in 0..=b`; entries with `|i - j| > b`
/// are structurally zero and the upper triangle is implied by symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    b: usize,
    diags: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn zeros(n: usize, b: usize) -> Self {
        assert!(b < n.max(1), "half-bandwidth must be below the order");
        let diags = (0..=b).map(|d| vec![0.0; n - d]).collect();
        Self { n, b, diags }
    }

    /// Capture the band of a dense symmetric matrix. Entries outside the
    /// band are required to be at most `tol` in magnitude.
    pub fn from_dense(a: &Matrix, b: usize, tol: f64) -> Result<Self, KernelError> {
        if a.rows() != a.cols() {
            return Err(KernelError::BadShape {
                ctx: "band capture requires a square matrix",
            });
        }
        let n = a.rows();
        let mut out = Self::zeros(n, b);
        for i in 0..n {
            for j in 0..=i {
                let v = a[(i, j)];
                if i - j <= b {
                    out.diags[i - j][j] = v;
                } else if v.abs() > tol {
                    return Err(KernelError::BadShape {
                        ctx: "entry outside the declared bandwidth",
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.b
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.b {
            0.0
        } else {
            self.diags[hi - lo][lo]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(hi - lo <= self.b, "write outside the band");
        self.diags[hi - lo][lo] = v;
    }

    pub fn diagonal(&self, d: usize) -> &[f64] {
        &self.diags[d]
    }

    pub fn to_dense(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for d in 0..=self.b {
            for j in 0..(self.n - d) {
                a[(j + d, j)] = self.diags[d][j];
                a[(j, j + d)] = self.diags[d][j];
            }
        }
        a
    }

    pub fn words(&self) -> u64 {
        self.diags.iter().map(|d| d.len() as u64).sum()
    }
}

/// Reduce a symmetric band matrix to tridiagonal form by Givens bulge
/// chasing, one outer diagonal at a time. Returns `(diag, offdiag)` of a
/// matrix orthogonally similar to the input.
///
/// Work is charged per rotation from the width of the row/column window it
/// touches; vertical traffic is the band footprint under the analytic rule.
pub fn band_to_tridiagonal_seq(
    band: &BandMatrix,
    sink: &mut dyn CostSink,
) -> (Vec<f64>, Vec<f64>) {
    let n = band.order();
    let b = band.half_bandwidth();
    sink.charge(0, vertical_charge(band.words(), sink.cache_words()));
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    if b <= 1 {
        let diag = (0..n).map(|i| band.get(i, i)).collect();
        let off = (0..n.saturating_sub(1)).map(|i| band.get(i + 1, i)).collect();
        return (diag, off);
    }

    let mut a = band.to_dense();
    let mut flops: u64 = 0;
    for d in (2..=b).rev() {
        for j in 0..(n - d) {
            // Zero a[j+d][j], then chase the fill-in d rows at a time.
            let mut r = j + d;
            let mut c = j;
            while r < n {
                if a[(r, c)] == 0.0 {
                    break;
                }
                flops += apply_symmetric_rotation(&mut a, r, c, d);
                a[(r, c)] = 0.0;
                a[(c, r)] = 0.0;
                c = r - 1;
                r += d;
            }
        }
    }
    sink.charge(flops, 0);

    let diag = (0..n).map(|i| a[(i, i)]).collect();
    let off = (0..n - 1).map(|i| a[(i + 1, i)]).collect();
    (diag, off)
}

/// Rotate rows and columns (r-1, r) to zero `a[r][c]`, restricted to the
/// window where either row carries nonzeros at working bandwidth `d`.
/// Returns the flops spent (6 per updated pair plus the 2x2 pivot block).
fn apply_symmetric_rotation(a: &mut Matrix, r: usize, c: usize, d: usize) -> u64 {
    let n = a.rows();
    let f = a[(r - 1, c)];
    let g = a[(r, c)];
    let h = f.hypot(g);
    let (cs, sn) = (f / h, g / h);

    let lo = c.min(r.saturating_sub(d + 1));
    let hi = (r + d + 1).min(n - 1);
    // Rows r-1 and r over the window, mirrored into the columns.
    for k in lo..=hi {
        if k == r - 1 || k == r {
            continue;
        }
        let x = a[(r - 1, k)];
        let y = a[(r, k)];
        let xr = cs * x + sn * y;
        let yr = -sn * x + cs * y;
        a[(r - 1, k)] = xr;
        a[(r, k)] = yr;
        a[(k, r - 1)] = xr;
        a[(k, r)] = yr;
    }
    // 2x2 pivot block.
    let app = a[(r - 1, r - 1)];
    let apq = a[(r - 1, r)];
    let aqq = a[(r, r)];
    a[(r - 1, r - 1)] = cs * cs * app + 2.0 * cs * sn * apq + sn * sn * aqq;
    a[(r, r)] = sn * sn * app - 2.0 * cs * sn * apq + cs * cs * aqq;
    let off = (cs * cs - sn * sn) * apq + cs * sn * (aqq - app);
    a[(r - 1, r)] = off;
    a[(r, r - 1)] = off;

    6 * (hi - lo + 1) as u64 + 12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::NullSink;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn tridiagonal_input_passes_through() {
        let mut band = BandMatrix::zeros(4, 1);
        for i in 0..4 {
            band.set(i, i, (i + 1) as f64);
        }
        for i in 0..3 {
            band.set(i + 1, i, 0.5);
        }
        let (d, e) = band_to_tridiagonal_seq(&band, &mut NullSink);
        assert_eq!(d, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn diagonal_stored_wide_stays_diagonal() {
        let mut band = BandMatrix::zeros(3, 2);
        band.set(0, 0, 1.0);
        band.set(1, 1, 2.0);
        band.set(2, 2, 3.0);
        let (d, e) = band_to_tridiagonal_seq(&band, &mut NullSink);
        assert_eq!(d, vec![1.0, 2.0, 3.0]);
        assert_eq!(e, vec![0.0, 0.0]);
    }

    #[test]
    fn random_band_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let b = 3;
        let mut band = BandMatrix::zeros(n, b);
        for d in 0..=b {
            for j in 0..(n - d) {
                band.set(j + d, j, rng.gen_range(-1.0..1.0));
            }
        }
        let dense = band.to_dense();
        let reference = jacobi_oracle::jacobi_eigenvalues(dense.data(), n).unwrap();
        let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let (d, e) = band_to_tridiagonal_seq(&band, &mut NullSink);
        let ours = sorted(crate::tridiagonal_eigenvalues(&d, &e, &mut NullSink).unwrap());
        for (x, y) in ours.iter().zip(&reference) {
            assert!((x - y).abs() <= 1e-12 * norm.max(1.0), "{x} vs {y}");
        }
    }
}
