//! Process-wide parallelism cap.
//!
//! `VOCABLAB_THREADS` limits the rayon pool used for batch kernels and
//! evaluation fan-out. Call [`init`] once near process start; later calls
//! are no-ops (the pool can only be configured before first use).

use std::sync::Once;

static INIT: Once = Once::new();

/// Build the global rayon pool, honoring `VOCABLAB_THREADS` if set.
pub fn init() {
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("VOCABLAB_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore the error: a pool may already exist in tests.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}
