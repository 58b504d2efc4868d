use crate::error::EngineError;

pub type ProcId = usize;

/// Sorted, duplicate-free set of processor ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcSet(Vec<ProcId>);

impl ProcSet {
    pub fn new(mut ids: Vec<ProcId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn range(lo: ProcId, len: usize) -> Self {
        Self((lo..lo + len).collect())
    }

    pub fn singleton(id: ProcId) -> Self {
        Self(vec![id])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[ProcId] {
        &self.0
    }

    pub fn get(&self, i: usize) -> ProcId {
        self.0[i]
    }

    pub fn root(&self) -> ProcId {
        self.0[0]
    }

    pub fn contains(&self, id: ProcId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn is_disjoint(&self, other: &ProcSet) -> bool {
        self.0.iter().all(|id| !other.contains(*id))
    }

    pub fn is_subset_of(&self, other: &ProcSet) -> bool {
        self.0.iter().all(|id| other.contains(*id))
    }

    /// First `k` ids as a subset.
    pub fn take(&self, k: usize) -> ProcSet {
        Self(self.0[..k.min(self.0.len())].to_vec())
    }

    /// Split into `parts` contiguous chunks with sizes as equal as possible
    /// (later chunks absorb the remainder).
    pub fn split(&self, parts: usize) -> Vec<ProcSet> {
        assert!(parts >= 1 && parts <= self.0.len(), "bad split");
        let n = self.0.len();
        (0..parts)
            .map(|k| Self(self.0[k * n / parts..(k + 1) * n / parts].to_vec()))
            .collect()
    }

    pub fn union(sets: &[ProcSet]) -> ProcSet {
        let mut ids: Vec<ProcId> = sets.iter().flat_map(|s| s.0.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }
}

/// A `q x q x c` grid of processors carved out of the machine. Layer `l` is
/// a `q x q` square; the grid's replication factor `c` never exceeds `q`
/// (the tuning exponent stays in `[1/2, 2/3]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcGrid {
    ids: Vec<ProcId>,
    q: usize,
    c: usize,
}

impl ProcGrid {
    pub fn new(ids: Vec<ProcId>, q: usize, c: usize) -> Result<Self, EngineError> {
        if q < 1 || c < 1 {
            return Err(EngineError::Invalid { ctx: "grid needs q >= 1, c >= 1" });
        }
        if ids.len() != q * q * c {
            return Err(EngineError::Invalid { ctx: "grid ids must number q*q*c" });
        }
        if c > q {
            return Err(EngineError::Invalid {
                ctx: "replication beyond c = q exceeds the supported exponent range",
            });
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(EngineError::Invalid { ctx: "grid ids must be distinct" });
        }
        Ok(Self { ids, q, c })
    }

    /// Grid over processors `0..q*q*c`.
    pub fn contiguous(q: usize, c: usize) -> Result<Self, EngineError> {
        Self::new((0..q * q * c).collect(), q, c)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn p(&self) -> usize {
        self.ids.len()
    }

    /// Tuning exponent recovered from q = p^(1-delta).
    pub fn delta(&self) -> f64 {
        let p = self.p() as f64;
        if p <= 1.0 {
            return 0.5;
        }
        1.0 - (self.q as f64).ln() / p.ln()
    }

    pub fn at(&self, i: usize, j: usize, l: usize) -> ProcId {
        debug_assert!(i < self.q && j < self.q && l < self.c);
        self.ids[(l * self.q + j) * self.q + i]
    }

    pub fn all(&self) -> ProcSet {
        ProcSet::new(self.ids.clone())
    }

    pub fn layer(&self, l: usize) -> ProcSet {
        ProcSet::new(self.ids[l * self.q * self.q..(l + 1) * self.q * self.q].to_vec())
    }

    /// Processors `Pi[:, 0..z, :]`: the first `z` grid columns on every layer.
    pub fn column_slab(&self, z: usize) -> ProcSet {
        let mut ids = Vec::with_capacity(self.q * z * self.c);
        for l in 0..self.c {
            for j in 0..z.min(self.q) {
                for i in 0..self.q {
                    ids.push(self.at(i, j, l));
                }
            }
        }
        ProcSet::new(ids)
    }

    /// The `q` processors of grid column `j` on layer `l`.
    pub fn column_group(&self, j: usize, l: usize) -> Vec<ProcId> {
        (0..self.q).map(|i| self.at(i, j, l)).collect()
    }

    /// The `q` processors of grid row `i` on layer `l`.
    pub fn row_group(&self, i: usize, l: usize) -> Vec<ProcId> {
        (0..self.q).map(|j| self.at(i, j, l)).collect()
    }
}
