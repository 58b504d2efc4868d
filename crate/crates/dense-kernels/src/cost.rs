/// Receiver for per-kernel cost charges.
///
/// `charge(flops, vertical_words)` accumulates computation and memory-to-cache
/// traffic for the processor the sink is bound to. `cache_words` is the cache
/// capacity used by the analytic vertical-traffic rule: a kernel charges its
/// operand footprint only when that footprint exceeds the cache.
pub trait CostSink {
    fn charge(&mut self, flops: u64, vertical_words: u64);

    fn cache_words(&self) -> u64;
}

/// Sink that drops all charges; used when kernels run outside a simulation.
pub struct NullSink;

impl CostSink for NullSink {
    fn charge(&mut self, _flops: u64, _vertical_words: u64) {}

    fn cache_words(&self) -> u64 {
        u64::MAX
    }
}

/// Vertical words charged for a kernel whose live operand set is `footprint`
/// words: the full footprint when it spills the cache, nothing otherwise.
pub(crate) fn vertical_charge(footprint: u64, cache: u64) -> u64 {
    if footprint > cache {
        footprint
    } else {
        0
    }
}
