use std::sync::atomic::{AtomicU64, Ordering};

/// Cost ledger counting traversals of input data matrices.
///
/// One product `Z v` or `Zᵀ u` with a data matrix is one pass. Each solver run
/// owns its counter; operators only borrow it.
#[derive(Debug, Default)]
pub struct PassCounter(AtomicU64);

impl PassCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, passes: u64) {
        self.0.fetch_add(passes, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}
