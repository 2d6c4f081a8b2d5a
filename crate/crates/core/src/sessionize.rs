//! User identification and time-oriented sessionization.
//!
//! Users are distinct (IP alias, user-agent alias) pairs. Each user's
//! time-ordered requests are cut into sessions by one of two heuristics:
//! the first bounds total session duration by `beta`, the second bounds the
//! gap between consecutive requests by `beta`. Both boundaries are
//! inclusive: a request exactly `beta` seconds away still joins.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::log_ingest::{CleanedRecord, UserKey};
use crate::timestamp;

/// Session-cutting heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    /// Total session duration bounded: a request joins the session opened at
    /// `t1` iff `t - t1 <= beta`.
    Toh1,
    /// Per-page gap bounded: a request joins iff it follows the previous one
    /// within `beta`.
    Toh2,
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Heuristic::Toh1 => write!(f, "toh1"),
            Heuristic::Toh2 => write!(f, "toh2"),
        }
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_lowercase().as_str() {
            "toh1" => Ok(Heuristic::Toh1),
            "toh2" => Ok(Heuristic::Toh2),
            other => Err(format!("unknown heuristic {other:?} (expected toh1 or toh2)")),
        }
    }
}

/// Default session threshold: 30 minutes.
pub const DEFAULT_BETA_SECONDS: f64 = 1800.0;

/// All requests of one user, in timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserActivity {
    pub key: UserKey,
    pub requests: Vec<CleanedRecord>,
}

/// Identifies a session as (user, 1-based ordinal within that user).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId {
    pub user: UserKey,
    pub ordinal: u32,
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-S{}", self.user, self.ordinal)
    }
}

/// One user visit: the ordered URL ids it requested, their per-URL
/// frequencies, and a fuzzy significance weight (default 1, assigned later
/// from the unique-URL count).
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: SessionId,
    pub first_ts: f64,
    pub last_ts: f64,
    pub raw_requests: Vec<u32>,
    pub url_freqs: BTreeMap<u32, u32>,
    pub weight: f64,
}

impl Session {
    /// Number of distinct URLs in the session.
    pub fn unique_count(&self) -> usize {
        self.url_freqs.len()
    }

    /// Total number of requests in the session.
    pub fn raw_count(&self) -> usize {
        self.raw_requests.len()
    }

    fn from_records(id: SessionId, records: &[CleanedRecord]) -> Self {
        let mut url_freqs = BTreeMap::new();
        let mut raw_requests = Vec::with_capacity(records.len());
        for rec in records {
            raw_requests.push(rec.url_id);
            *url_freqs.entry(rec.url_id).or_insert(0) += 1;
        }
        Session {
            id,
            first_ts: records.first().map_or(0.0, |r| r.timestamp),
            last_ts: records.last().map_or(0.0, |r| r.timestamp),
            raw_requests,
            url_freqs,
            weight: 1.0,
        }
    }
}

/// Summary statistics over a session set.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub session_count: usize,
    pub raw_min: usize,
    pub raw_max: usize,
    pub raw_avg: f64,
    pub unique_min: usize,
    pub unique_max: usize,
    pub unique_avg: f64,
}

/// Groups cleaned records into per-user activity streams. Users appear in
/// first-seen order; per-user request order is preserved.
pub fn identify_users(records: &[CleanedRecord]) -> Vec<UserActivity> {
    debug_assert!(records.windows(2).all(|p| p[0].timestamp <= p[1].timestamp));
    let mut by_user: IndexMap<UserKey, Vec<CleanedRecord>> = IndexMap::new();
    for rec in records {
        by_user.entry(rec.user_key).or_default().push(rec.clone());
    }
    by_user
        .into_iter()
        .map(|(key, requests)| UserActivity { key, requests })
        .collect()
}

/// Computes session boundaries as index ranges over `requests`.
///
/// A request that falls outside the bound closes the current session and
/// becomes the first request of the next one.
pub fn segment_bounds(
    requests: &[CleanedRecord],
    heuristic: Heuristic,
    beta_s: f64,
) -> Vec<Range<usize>> {
    debug_assert!(beta_s > 0.0);
    if requests.is_empty() {
        return Vec::new();
    }
    let mut bounds = Vec::new();
    let mut start = 0usize;
    for i in 1..requests.len() {
        let ts = requests[i].timestamp;
        let out_of_session = match heuristic {
            Heuristic::Toh1 => ts - requests[start].timestamp > beta_s,
            Heuristic::Toh2 => ts - requests[i - 1].timestamp > beta_s,
        };
        if out_of_session {
            bounds.push(start..i);
            start = i;
        }
    }
    bounds.push(start..requests.len());
    bounds
}

/// Cuts one user's activity into sessions under the given heuristic.
pub fn sessionize(user: &UserActivity, heuristic: Heuristic, beta_s: f64) -> Vec<Session> {
    segment_bounds(&user.requests, heuristic, beta_s)
        .into_iter()
        .enumerate()
        .map(|(i, range)| {
            let id = SessionId {
                user: user.key,
                ordinal: (i + 1) as u32,
            };
            Session::from_records(id, &user.requests[range])
        })
        .collect()
}

/// Runs sessionization over every user and flattens the result in user
/// order.
pub fn sessionize_all(users: &[UserActivity], heuristic: Heuristic, beta_s: f64) -> Vec<Session> {
    users
        .iter()
        .flat_map(|u| sessionize(u, heuristic, beta_s))
        .collect()
}

/// Recomputes the per-URL frequency table from the raw request list.
/// Idempotent; the raw order is retained.
pub fn dedup_session(mut s: Session) -> Session {
    let mut url_freqs = BTreeMap::new();
    for &url in &s.raw_requests {
        *url_freqs.entry(url).or_insert(0) += 1;
    }
    s.url_freqs = url_freqs;
    s
}

/// Exact min/max/mean of raw and unique URL counts per session.
pub fn session_stats(sessions: &[Session]) -> Result<SessionStats> {
    if sessions.is_empty() {
        return Err(Error::NoSessions);
    }
    let raw: Vec<usize> = sessions.iter().map(|s| s.raw_count()).collect();
    let unique: Vec<usize> = sessions.iter().map(|s| s.unique_count()).collect();
    let sum = |v: &[usize]| v.iter().sum::<usize>() as f64;
    Ok(SessionStats {
        session_count: sessions.len(),
        raw_min: *raw.iter().min().unwrap(),
        raw_max: *raw.iter().max().unwrap(),
        raw_avg: sum(&raw) / raw.len() as f64,
        unique_min: *unique.iter().min().unwrap(),
        unique_max: *unique.iter().max().unwrap(),
        unique_avg: sum(&unique) / unique.len() as f64,
    })
}

/// Writes one line per session: `user_key<TAB>ordinal<TAB>url:freq,...`
/// with URLs in ascending id order.
pub fn write_sessions_compact<W: Write>(mut w: W, sessions: &[Session]) -> Result<()> {
    for s in sessions {
        let freqs = s
            .url_freqs
            .iter()
            .map(|(url, n)| format!("{url}:{n}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{}\t{}\t{}", s.id.user, s.id.ordinal, freqs)?;
    }
    Ok(())
}

/// Reads the compact session file. Timestamps and raw request order are not
/// stored in this format; raw requests are reconstructed by repeating each
/// URL id `freq` times, which preserves every count downstream.
pub fn read_sessions_compact<R: BufRead>(reader: R) -> Result<Vec<Session>> {
    let bad = |line: usize, reason: String| Error::BadFormat {
        what: "session file".to_string(),
        line,
        reason,
    };
    let mut sessions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(line_no, "expected 3 columns".to_string()));
        }
        let user: UserKey = cols[0].parse().map_err(|e| bad(line_no, e))?;
        let ordinal: u32 = cols[1]
            .parse()
            .map_err(|_| bad(line_no, "bad ordinal".to_string()))?;
        let mut url_freqs = BTreeMap::new();
        if !cols[2].is_empty() {
            for part in cols[2].split(',') {
                let (url, freq) = part
                    .split_once(':')
                    .ok_or_else(|| bad(line_no, format!("bad freq entry {part:?}")))?;
                let url: u32 = url
                    .parse()
                    .map_err(|_| bad(line_no, "bad url id".to_string()))?;
                let freq: u32 = freq
                    .parse()
                    .map_err(|_| bad(line_no, "bad frequency".to_string()))?;
                url_freqs.insert(url, freq);
            }
        }
        let raw_requests: Vec<u32> = url_freqs
            .iter()
            .flat_map(|(&url, &n)| std::iter::repeat_n(url, n as usize))
            .collect();
        sessions.push(Session {
            id: SessionId { user, ordinal },
            first_ts: 0.0,
            last_ts: 0.0,
            raw_requests,
            url_freqs,
            weight: 1.0,
        });
    }
    Ok(sessions)
}

/// Writes the human-readable session block file: one row per request,
/// grouped by session, with the session label only on its first row.
pub fn write_session_blocks<W: Write>(
    mut w: W,
    users: &[UserActivity],
    heuristic: Heuristic,
    beta_s: f64,
) -> Result<()> {
    writeln!(w, "UserSession\tTime\tElapsedTime\tBytes\tURL")?;
    for user in users {
        for (i, range) in segment_bounds(&user.requests, heuristic, beta_s)
            .into_iter()
            .enumerate()
        {
            let id = SessionId {
                user: user.key,
                ordinal: (i + 1) as u32,
            };
            for (j, rec) in user.requests[range].iter().enumerate() {
                let label = if j == 0 { id.to_string() } else { String::new() };
                writeln!(
                    w,
                    "{label}\t{}\t{}\t{}\t{}",
                    timestamp::compact_utc(rec.timestamp),
                    rec.elapsed_ms,
                    rec.bytes,
                    rec.url_id
                )?;
            }
        }
    }
    Ok(())
}
