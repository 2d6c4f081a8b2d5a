//! Timestamp rendering helpers.
//!
//! Timestamps are carried internally as epoch seconds with fractional
//! milliseconds; human-readable outputs use the compact `YYYYMMDDHHMMSS`
//! form (UTC, sub-second part dropped).

use chrono::DateTime;

/// Renders epoch seconds as `YYYYMMDDHHMMSS` in UTC.
pub fn compact_utc(epoch_seconds: f64) -> String {
    let secs = epoch_seconds.floor() as i64;
    match DateTime::from_timestamp(secs, 0) {
        Some(dt) => dt.format("%Y%m%d%H%M%S").to_string(),
        None => format!("{epoch_seconds}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_compact_utc() {
        // 2008-06-01 01:48:05 UTC plus milliseconds that must be dropped.
        assert_eq!(compact_utc(1212284885.247), "20080601014805");
        assert_eq!(compact_utc(0.0), "19700101000000");
    }
}
