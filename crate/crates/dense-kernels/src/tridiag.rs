use crate::cost::{vertical_charge, CostSink};
use crate::error::KernelError;

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit-shift QL
/// iteration with Wilkinson-style shifts, ascending order.
///
/// `diag` has length `n`, `offdiag` length `n - 1`. Fails if more than `30 n`
/// implicit sweeps are spent in total.
pub fn tridiagonal_eigenvalues(
    diag: &[f64],
    offdiag: &[f64],
    sink: &mut dyn CostSink,
) -> Result<Vec<f64>, KernelError> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if offdiag.len() + 1 != n {
        return Err(KernelError::BadShape {
            ctx: "offdiag must have length n - 1",
        });
    }
    sink.charge(0, vertical_charge(2 * n as u64, sink.cache_words()));
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);

    let cap = 30 * n;
    let mut sweeps = 0usize;
    let mut flops: u64 = 0;

    for l in 0..n {
        loop {
            // Look for a negligible off-diagonal to split at.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > cap {
                sink.charge(flops, 0);
                return Err(KernelError::NoConvergence { iterations: cap });
            }

            // Wilkinson-style shift from the leading 2x2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                flops += 14;
                if i == l {
                    d[l] -= p;
                    e[l] = g;
                    e[m] = 0.0;
                }
            }
        }
    }
    sink.charge(flops, 0);
    d.sort_by(f64::total_cmp);
    Ok(d)
}
