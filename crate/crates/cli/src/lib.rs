//! Pipeline orchestration behind the `webprof` binary: configuration,
//! stage sequencing, artifact layout, and report emission.

pub mod config;
pub mod pipeline;
pub mod report;

use thiserror::Error;

/// Artifact names inside a run directory.
pub mod files {
    pub const CLEANED: &str = "cleaned.tsv";
    pub const URL_MAP: &str = "urlmap.tsv";
    pub const CLEAN_STATS: &str = "clean_stats.tsv";
    pub const SESSIONS: &str = "sessions.tsv";
    pub const SESSION_BLOCKS: &str = "session_blocks.txt";
    pub const SESSION_STATS: &str = "session_stats.tsv";
    pub const MATRIX: &str = "matrix.txt";
    pub const CATALOG: &str = "catalog.tsv";
    pub const MODEL: &str = "model.json";
    pub const VALIDITY: &str = "validity.csv";
    pub const VALIDITY_UNWEIGHTED: &str = "validity_unweighted.csv";
    pub const PROFILES: &str = "profiles.txt";
    pub const TIMINGS: &str = "timings.txt";
    pub const FAILURE_MARKER: &str = "FAILED.txt";

    pub const ACCESS_HIST: &str = "url_access_hist.csv";
    pub const SUPPORT_HIST: &str = "url_session_support.csv";
    pub const SIZE_HIST: &str = "session_size_hist.csv";
    pub const PERF_INDEX: &str = "perf_index_vs_c.csv";
    pub const VALIDITY_VS_C: &str = "validity_vs_c.csv";
    pub const SUMMARY: &str = "summary.txt";

    /// Report files covered by the byte-for-byte determinism contract.
    pub const DETERMINISTIC_OUTPUTS: &[&str] = &[
        CLEANED,
        URL_MAP,
        CLEAN_STATS,
        SESSIONS,
        SESSION_BLOCKS,
        SESSION_STATS,
        MATRIX,
        CATALOG,
        MODEL,
        VALIDITY,
        VALIDITY_UNWEIGHTED,
        PROFILES,
        ACCESS_HIST,
        SUPPORT_HIST,
        SIZE_HIST,
        PERF_INDEX,
        VALIDITY_VS_C,
        SUMMARY,
    ];
}

/// CLI-level error with a process exit code: 1 for validation problems,
/// 2 for stage failures, 3 for I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: webprof_core::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { source, .. } => match source {
                webprof_core::Error::Io(_) => 3,
                webprof_core::Error::InvalidConfig(_) => 1,
                _ => 2,
            },
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
