use std::ops::Range;

/// Row/column geometry of one bulge chase, matching the offset rules of the
/// pipelined band reduction. Offsets are zero-based counts; ranges are
/// half-open. Bulge `i` and chase `j` are one-based as in the schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulgeIndexSet {
    pub o_blg: usize,
    pub o_qr_r: usize,
    pub o_qr_c: usize,
    pub o_v: usize,
    pub o_up_c: usize,
    pub n_r: usize,
    pub n_c: usize,
}

impl BulgeIndexSet {
    pub fn new(n: usize, b: usize, h: usize, i: usize, j: usize) -> Self {
        assert!(i >= 1 && j >= 1 && h >= 1 && b >= h);
        let o_blg = (i - 1) * h + (j - 1) * b;
        let o_qr_r = o_blg + h;
        let (o_qr_c, o_v) = if j == 1 {
            (o_qr_r - h, 0)
        } else {
            (o_qr_r - b, b - h)
        };
        // o_up.c is only spelled out for j > 1 in the source scheme; the
        // same expression is dimensionally forced for j = 1.
        let o_up_c = o_qr_c + h;
        assert!(o_qr_r < n, "chase starts past the matrix end");
        let n_r = (n - o_qr_r).min(b);
        let n_c = (n - o_up_c).min(h + 3 * b);
        Self {
            o_blg,
            o_qr_r,
            o_qr_c,
            o_v,
            o_up_c,
            n_r,
            n_c,
        }
    }

    pub fn qr_rows(&self) -> Range<usize> {
        self.o_qr_r..self.o_qr_r + self.n_r
    }

    /// Panel columns, clipped so the panel keeps at least as many rows as
    /// columns near the matrix end.
    pub fn qr_cols(&self, h: usize) -> Range<usize> {
        self.o_qr_c..self.o_qr_c + h.min(self.n_r)
    }

    /// Rows of the update block that form the symmetric overlap (indices
    /// into the `up_cols` window).
    pub fn v_rows(&self) -> Range<usize> {
        self.o_v..self.o_v + self.n_r
    }

    pub fn up_cols(&self) -> Range<usize> {
        self.o_up_c..self.o_up_c + self.n_c
    }
}

/// Number of chases of bulge `i` for order `n`, bandwidth `b`, panel height
/// `h`: every sub-band panel below row `i h` is eliminated, so the count is
/// `ceil((n - i h) / b)` (one more than a floor-based reading, which would
/// strand the final panel).
pub fn bulge_chase_count(n: usize, b: usize, h: usize, i: usize) -> usize {
    let remaining = n.saturating_sub(i * h);
    remaining.div_ceil(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_first_chase_geometry() {
        // n = 8, b = 4, k = 2 (h = 2), bulge 1, chase 1: offsets evaluate to
        // o_blg = 0, o_qr.r = 2, o_qr.c = 0, n_r = min(6, 4) = 4; the row
        // range is 3..6 and the column range 1..2 in one-based inclusive
        // terms, i.e. 2..6 and 0..2 below.
        let bs = BulgeIndexSet::new(8, 4, 2, 1, 1);
        assert_eq!(bs.o_blg, 0);
        assert_eq!(bs.o_qr_r, 2);
        assert_eq!(bs.o_qr_c, 0);
        assert_eq!(bs.n_r, 4);
        assert_eq!(bs.qr_rows(), 2..6);
        assert_eq!(bs.qr_cols(2), 0..2);
        assert_eq!(bs.o_up_c, 2);
        assert_eq!(bs.v_rows(), 0..4);
    }

    #[test]
    fn later_chase_offsets() {
        let bs = BulgeIndexSet::new(16, 4, 2, 2, 3);
        // o_blg = h + 2b = 10, o_qr.r = 12, o_qr.c = o_qr.r - b = 8,
        // o_v = b - h = 2, o_up.c = o_qr.c + h = 10.
        assert_eq!(bs.o_blg, 10);
        assert_eq!(bs.o_qr_r, 12);
        assert_eq!(bs.o_qr_c, 8);
        assert_eq!(bs.o_v, 2);
        assert_eq!(bs.o_up_c, 10);
        assert_eq!(bs.n_r, 4);
        assert_eq!(bs.n_c, 6);
    }

    #[test]
    fn chase_count_covers_last_panel() {
        // n = 8, b = 2, h = 1: bulge 6 still needs one chase to clear
        // (8, 6); bulge 1 needs four to push its bulge off the end.
        assert_eq!(bulge_chase_count(8, 2, 1, 6), 1);
        assert_eq!(bulge_chase_count(8, 2, 1, 1), 4);
        assert_eq!(bulge_chase_count(8, 2, 1, 7), 1);
    }
}
