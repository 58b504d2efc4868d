/// Shape plan for the QR reduction tree.
#[derive(Debug, Clone)]
pub struct QrTreePlan {
    /// Rows of the original input (after padding to a power-of-two ratio).
    pub m: usize,
    /// Columns of the input.
    pub n: usize,
    /// Processors of the top-level call (a power of two).
    pub p: usize,
    /// Tuning exponent in [1/2, 2/3].
    pub delta: f64,
    /// Processor cap for base-case square factorizations:
    /// `(p n / m) * (log2 p)^(1/delta)`, rounded to the nearest power of two.
    pub q_max: usize,
}

impl QrTreePlan {
    pub fn new(m: usize, n: usize, p: usize, delta: f64) -> Self {
        let q_max = if p <= 1 {
            1
        } else {
            let raw = (p as f64 * n as f64 / m as f64) * (p as f64).log2().powf(1.0 / delta);
            round_to_pow2(raw).max(1)
        };
        Self { m, n, p, delta, q_max }
    }

    /// Row-partition factor at `m_cur` rows: `min(p_cur, ceil(m / 2n))`.
    pub fn branching(&self, m_cur: usize, p_cur: usize) -> usize {
        p_cur.min(m_cur.div_ceil(2 * self.n)).max(1)
    }

    /// Default refinement parameter for the recombining products,
    /// `(p n / m_cur)^(2 - 3 delta)`, at least one.
    pub fn refinement(&self, m_cur: usize) -> f64 {
        let base = self.p as f64 * self.n as f64 / m_cur.max(1) as f64;
        base.powf(2.0 - 3.0 * self.delta).max(1.0)
    }
}

/// Nearest power of two in log space.
pub(crate) fn round_to_pow2(x: f64) -> usize {
    if x <= 1.0 {
        return 1;
    }
    let exp = x.log2().round() as u32;
    1usize << exp.min(60)
}

/// Largest power of two not exceeding `x` (x >= 1).
pub(crate) fn floor_pow2(x: usize) -> usize {
    let mut v = 1usize;
    while v * 2 <= x {
        v *= 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rules() {
        assert_eq!(round_to_pow2(0.3), 1);
        assert_eq!(round_to_pow2(3.0), 4); // log2(3) = 1.58 rounds to 2
        assert_eq!(round_to_pow2(5.0), 4);
        assert_eq!(round_to_pow2(6.0), 8);
        assert_eq!(floor_pow2(9), 8);
        assert_eq!(floor_pow2(1), 1);
    }

    #[test]
    fn branching_matches_row_ratio() {
        let plan = QrTreePlan::new(64, 4, 8, 0.5);
        assert_eq!(plan.branching(64, 8), 8);
        assert_eq!(plan.branching(16, 8), 2);
        assert_eq!(plan.branching(8, 8), 1);
    }
}
