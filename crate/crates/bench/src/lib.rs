//! Shared dataset builders for the benchmarks.

use webprof_core::synth::{synthetic_log, LogSpec};

/// A mid-sized synthetic access log (about 10k lines).
pub fn bench_log() -> String {
    synthetic_log(&LogSpec {
        users: 48,
        urls: 60,
        sessions_per_user: 16,
        seed: 99,
        ..LogSpec::default()
    })
}
