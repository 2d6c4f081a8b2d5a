//! Batch mining of usage profiles from web server access logs.
//!
//! The crate covers the full path from raw access-log lines to overlapping
//! usage-profile clusters:
//!
//! 1. [`log_ingest`] — parse, clean, anonymize, and URL-intern raw log lines;
//! 2. [`sessionize`] — group records into users and cut time-oriented sessions;
//! 3. [`features`] — drop low-support URLs, weigh sessions, build the
//!    session-by-URL matrix;
//! 4. [`fcm`] — weighted fuzzy c-means, validity scoring, and the
//!    cluster-count sweep that picks the profile count.
//!
//! Everything is deterministic under a fixed seed: per-task seeds are derived
//! with [`seed::derive`], so reruns and parallel schedules reproduce results
//! byte for byte.

pub mod error;
pub mod features;
pub mod fcm;
pub mod log_ingest;
pub mod seed;
pub mod sessionize;
pub mod synth;
pub mod timestamp;

pub use error::{Error, Result};
pub use features::{SessionMatrix, UrlSupport, VectorScheme, WeightConfig};
pub use fcm::{FcmConfig, FcmModel, Profile, SweepConfig, ValidityReport, ZeroWeightPolicy};
pub use log_ingest::{CleanPolicy, CleanStats, CleanedRecord, LogRecord, UrlMap, UserKey};
pub use sessionize::{Heuristic, Session, SessionStats, UserActivity};
