//! Raw access-log parsing and cleaning.
//!
//! Input lines are squid-native style: ten whitespace-separated fields
//! (time, elapsed, client IP, tag/status, bytes, method, URL, user,
//! hierarchy, user agent). Cleaning removes requests for embedded objects
//! by URL suffix, removes robot traffic by user-agent token and by
//! `robots.txt` fetches, strips query strings, replaces IPs and user agents
//! with first-seen aliases, and interns URLs into dense numeric ids.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error as CoreError, Result};

/// Filename suffixes treated as embedded objects (images, styles, scripts).
pub const DEFAULT_IRRELEVANT_SUFFIXES: &[&str] = &[
    "gif", "jpeg", "GIF", "JPEG", "jpg", "JPG", "map", "css", "js", "png", "ico",
];

/// Built-in robot user-agent tokens, matched case-insensitively as substrings.
pub const DEFAULT_ROBOT_AGENTS: &[&str] = &[
    "bot",
    "crawler",
    "spider",
    "slurp",
    "baiduspider",
    "yandex",
    "duckduckbot",
    "facebookexternalhit",
    "ahrefs",
    "semrush",
    "mj12bot",
    "dotbot",
    "petalbot",
    "applebot",
    "archive.org_bot",
    "ia_archiver",
    "wget",
    "curl",
    "python-requests",
    "libwww",
];

/// URL substrings whose requesters are treated as robots.
pub const DEFAULT_ROBOT_URL_MARKERS: &[&str] = &["robots.txt"];

/// One successfully parsed raw log line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    /// Request time, epoch seconds with millisecond fraction.
    pub timestamp: f64,
    /// Elapsed time of the request in milliseconds.
    pub elapsed_ms: u64,
    /// Client IP as logged (dotted quad).
    pub client_ip: String,
    /// Cache result tag, e.g. `TCP_MISS`.
    pub result_tag: String,
    /// HTTP status parsed from the `TAG/status` field.
    pub status_code: u16,
    /// Bytes sent in the response.
    pub bytes: u64,
    /// HTTP method token.
    pub method: String,
    /// Requested URL.
    pub url: String,
    /// User agent string (remainder of the line, so agents with spaces survive).
    pub user_agent: String,
}

/// A malformed input line: counted, kept for diagnostics, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    /// 1-based input line number.
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    fn new(line: usize, reason: impl Into<String>) -> Self {
        ParseError {
            line,
            reason: reason.into(),
        }
    }
}

/// Anonymized user identity: first-seen alias indices for IP and user agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserKey {
    pub ip: u32,
    pub ua: u32,
}

impl UserKey {
    pub fn ip_alias(&self) -> String {
        format!("IP{}", self.ip)
    }

    pub fn ua_alias(&self) -> String {
        format!("UA{}", self.ua)
    }
}

impl fmt::Display for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IP{}-UA{}", self.ip, self.ua)
    }
}

impl std::str::FromStr for UserKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (ip_part, ua_part) = s
            .split_once('-')
            .ok_or_else(|| format!("bad user key {s:?}"))?;
        let ip = ip_part
            .strip_prefix("IP")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("bad ip alias {ip_part:?}"))?;
        let ua = ua_part
            .strip_prefix("UA")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("bad ua alias {ua_part:?}"))?;
        Ok(UserKey { ip, ua })
    }
}

/// A cleaned, anonymized record with the URL replaced by its interned id.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanedRecord {
    pub timestamp: f64,
    pub user_key: UserKey,
    pub elapsed_ms: u64,
    pub bytes: u64,
    pub url_id: u32,
}

/// Cleaning configuration.
///
/// `robot_agents` entries are stored lowercase and matched as substrings of
/// the lowercased user agent; suffix matching is case-sensitive, exactly as
/// the suffix list is written.
#[derive(Debug, Clone)]
pub struct CleanPolicy {
    pub irrelevant_suffixes: BTreeSet<String>,
    pub robot_agents: Vec<String>,
    pub robot_url_markers: Vec<String>,
    /// Remove the query string from kept URLs.
    pub strip_query: bool,
    /// Keep only these status codes; `None` keeps all.
    pub status_filter: Option<BTreeSet<u16>>,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        CleanPolicy {
            irrelevant_suffixes: DEFAULT_IRRELEVANT_SUFFIXES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            robot_agents: DEFAULT_ROBOT_AGENTS.iter().map(|s| s.to_string()).collect(),
            robot_url_markers: DEFAULT_ROBOT_URL_MARKERS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            strip_query: true,
            status_filter: None,
        }
    }
}

impl CleanPolicy {
    /// Replaces the suffix list, keeping matching case-sensitive.
    pub fn with_suffixes(mut self, suffixes: impl IntoIterator<Item = String>) -> Self {
        self.irrelevant_suffixes = suffixes.into_iter().collect();
        self
    }

    /// Replaces the robot agent token list; tokens are lowercased here.
    pub fn with_robot_agents(mut self, agents: impl IntoIterator<Item = String>) -> Self {
        self.robot_agents = agents.into_iter().map(|a| a.to_lowercase()).collect();
        self
    }

    fn is_robot_agent(&self, user_agent: &str) -> bool {
        let ua = user_agent.to_lowercase();
        self.robot_agents.iter().any(|token| ua.contains(token))
    }

    fn is_robot_url(&self, url: &str) -> bool {
        self.robot_url_markers.iter().any(|m| url.contains(m))
    }
}

/// Why a record was dropped during cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Suffix,
    Robot,
    Status,
}

/// Outcome of the per-record cleaning decision.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Keep the (possibly query-stripped) record.
    Keep(LogRecord),
    Drop(DropReason),
}

/// Bidirectional URL interning map with dense ids `1..=n` in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct UrlMap {
    urls: IndexSet<String>,
}

impl UrlMap {
    pub fn new() -> Self {
        UrlMap::default()
    }

    /// Returns the id for `url`, interning it if unseen.
    pub fn intern(&mut self, url: &str) -> u32 {
        let (idx, _) = self.urls.insert_full(url.to_string());
        (idx + 1) as u32
    }

    pub fn id(&self, url: &str) -> Option<u32> {
        self.urls.get_index_of(url).map(|i| (i + 1) as u32)
    }

    pub fn url(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.urls.get_index(id as usize - 1).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty()
    }

    /// Iterates `(id, url)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.urls
            .iter()
            .enumerate()
            .map(|(i, u)| ((i + 1) as u32, u.as_str()))
    }
}

/// First-seen alias tables for IPs and user agents plus the URL map.
#[derive(Debug, Clone, Default)]
pub struct AliasState {
    ips: IndexSet<String>,
    uas: IndexSet<String>,
    pub urls: UrlMap,
}

impl AliasState {
    pub fn new() -> Self {
        AliasState::default()
    }
}

/// Counters for one cleaning run. `input_lines` always equals
/// `parse_errors + dropped_suffix + dropped_robot + dropped_status + kept`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub input_lines: u64,
    pub parse_errors: u64,
    pub dropped_suffix: u64,
    pub dropped_robot: u64,
    pub dropped_status: u64,
    pub kept: u64,
}

impl CleanStats {
    /// Conservation check over the counters.
    pub fn is_consistent(&self) -> bool {
        self.input_lines
            == self.parse_errors
                + self.dropped_suffix
                + self.dropped_robot
                + self.dropped_status
                + self.kept
    }
}

/// Everything produced by [`clean_log`].
#[derive(Debug, Clone, Default)]
pub struct CleanOutput {
    /// Kept records, sorted by timestamp (stable on ties).
    pub records: Vec<CleanedRecord>,
    pub url_map: UrlMap,
    pub stats: CleanStats,
    /// Per-line parse failures, in input order.
    pub parse_failures: Vec<ParseError>,
}

/// Parses one raw log line. `line_no` is carried into the error for
/// diagnostics; it does not affect parsing.
pub fn parse_log_line(line: &str, line_no: usize) -> std::result::Result<LogRecord, ParseError> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err(ParseError::new(line_no, "empty"));
    }
    let fields: Vec<&str> = trimmed.split_whitespace().collect();
    if fields.len() < 10 {
        return Err(ParseError::new(
            line_no,
            format!("field count: expected 10, got {}", fields.len()),
        ));
    }

    let timestamp: f64 = fields[0]
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad timestamp {:?}", fields[0])))?;
    if !timestamp.is_finite() || timestamp <= 0.0 {
        return Err(ParseError::new(
            line_no,
            format!("bad timestamp {:?}", fields[0]),
        ));
    }
    let elapsed_ms: u64 = fields[1]
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad elapsed time {:?}", fields[1])))?;
    let client_ip = fields[2].to_string();
    let (result_tag, status) = fields[3]
        .split_once('/')
        .ok_or_else(|| ParseError::new(line_no, format!("bad result field {:?}", fields[3])))?;
    let status_code: u16 = status
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad status {status:?}")))?;
    let bytes: u64 = fields[4]
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad byte count {:?}", fields[4])))?;
    let method = fields[5].to_string();
    let url = fields[6].to_string();
    if url.is_empty() {
        return Err(ParseError::new(line_no, "empty URL"));
    }
    // fields[7] (client user name) and fields[8] (hierarchy) are parsed but
    // unused; anything past field 9 is part of the user agent.
    let user_agent = fields[9..].join(" ");

    Ok(LogRecord {
        timestamp,
        elapsed_ms,
        client_ip: client_ip.clone(),
        result_tag: result_tag.to_string(),
        status_code,
        bytes,
        method,
        url,
        user_agent,
    })
}

/// Strips `?query` and `#fragment` from a URL.
fn strip_query(url: &str) -> &str {
    match url.find(['?', '#']) {
        Some(i) => &url[..i],
        None => url,
    }
}

/// Filename suffix of the URL path, ignoring any query string.
fn url_suffix(url: &str) -> Option<&str> {
    let path = strip_query(url);
    let last_segment = path.rsplit('/').next().unwrap_or(path);
    match last_segment.rsplit_once('.') {
        Some((_, ext)) if !ext.is_empty() => Some(ext),
        _ => None,
    }
}

/// Applies the per-record cleaning decision. Total: every record yields a
/// verdict. Checks run in pipeline order: query strip, suffix, robot agent,
/// robot URL marker, status filter.
pub fn clean_record(mut rec: LogRecord, policy: &CleanPolicy) -> Verdict {
    if policy.strip_query {
        let stripped = strip_query(&rec.url);
        if stripped.len() != rec.url.len() {
            rec.url = stripped.to_string();
        }
    }
    if let Some(suffix) = url_suffix(&rec.url) {
        if policy.irrelevant_suffixes.contains(suffix) {
            return Verdict::Drop(DropReason::Suffix);
        }
    }
    if policy.is_robot_agent(&rec.user_agent) || policy.is_robot_url(&rec.url) {
        return Verdict::Drop(DropReason::Robot);
    }
    if let Some(allowed) = &policy.status_filter {
        if !allowed.contains(&rec.status_code) {
            return Verdict::Drop(DropReason::Status);
        }
    }
    Verdict::Keep(rec)
}

/// Anonymizes a kept record: k-th distinct IP becomes alias `IPk`, k-th
/// distinct user agent `UAk` (first-seen order), and the URL is interned.
pub fn anonymize_and_map(rec: &LogRecord, state: &mut AliasState) -> CleanedRecord {
    let ip = (state.ips.insert_full(rec.client_ip.clone()).0 + 1) as u32;
    let ua = (state.uas.insert_full(rec.user_agent.clone()).0 + 1) as u32;
    let url_id = state.urls.intern(&rec.url);
    CleanedRecord {
        timestamp: rec.timestamp,
        user_key: UserKey { ip, ua },
        elapsed_ms: rec.elapsed_ms,
        bytes: rec.bytes,
        url_id,
    }
}

/// Runs the full cleaning pass over a log stream.
///
/// Two passes over the parsed records: the first applies per-record rules
/// and collects the (ip, user agent) identities that ever fetched a robot
/// URL marker; the second drops every record of those identities. Kept
/// records are then sorted by timestamp (stable) and anonymized serially so
/// that alias numbering is first-seen in time order.
pub fn clean_log<R: BufRead>(reader: R, policy: &CleanPolicy) -> Result<CleanOutput> {
    let mut stats = CleanStats::default();
    let mut parse_failures = Vec::new();
    let mut kept_raw: Vec<LogRecord> = Vec::new();
    let mut robot_identities: HashSet<(String, String)> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        stats.input_lines += 1;
        let rec = match parse_log_line(&line, idx + 1) {
            Ok(rec) => rec,
            Err(err) => {
                stats.parse_errors += 1;
                parse_failures.push(err);
                continue;
            }
        };
        // A marker fetch brands the identity even if this record is itself
        // dropped for another reason.
        if policy.is_robot_url(&rec.url) {
            robot_identities.insert((rec.client_ip.clone(), rec.user_agent.clone()));
        }
        match clean_record(rec, policy) {
            Verdict::Keep(rec) => kept_raw.push(rec),
            Verdict::Drop(DropReason::Suffix) => stats.dropped_suffix += 1,
            Verdict::Drop(DropReason::Robot) => stats.dropped_robot += 1,
            Verdict::Drop(DropReason::Status) => stats.dropped_status += 1,
        }
    }

    if !robot_identities.is_empty() {
        kept_raw.retain(|rec| {
            let is_robot =
                robot_identities.contains(&(rec.client_ip.clone(), rec.user_agent.clone()));
            if is_robot {
                stats.dropped_robot += 1;
            }
            !is_robot
        });
    }

    kept_raw.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite ts"));

    let mut state = AliasState::new();
    let records: Vec<CleanedRecord> = kept_raw
        .iter()
        .map(|rec| anonymize_and_map(rec, &mut state))
        .collect();
    stats.kept = records.len() as u64;

    debug_assert!(stats.is_consistent());
    Ok(CleanOutput {
        records,
        url_map: state.urls,
        stats,
        parse_failures,
    })
}

/// Reads a token list file: one token per line, `#` comments and blank
/// lines skipped.
pub fn read_token_list<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let tok = line.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        tokens.push(tok.to_string());
    }
    Ok(tokens)
}

const CLEANED_HEADER: &str = "Time\tIP\tUserAgent\tElapsedTime\tBytes\tURL";

/// Writes cleaned records as tab-separated text. The Time column keeps the
/// full epoch value so downstream sessionization is lossless.
pub fn write_cleaned_tsv<W: Write>(mut w: W, records: &[CleanedRecord]) -> Result<()> {
    writeln!(w, "{CLEANED_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.timestamp,
            r.user_key.ip_alias(),
            r.user_key.ua_alias(),
            r.elapsed_ms,
            r.bytes,
            r.url_id
        )?;
    }
    Ok(())
}

/// Reads the cleaned-record file written by [`write_cleaned_tsv`].
pub fn read_cleaned_tsv<R: BufRead>(reader: R) -> Result<Vec<CleanedRecord>> {
    let bad = |line: usize, reason: &str| CoreError::BadFormat {
        what: "cleaned record file".to_string(),
        line,
        reason: reason.to_string(),
    };
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line != CLEANED_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(line_no, "expected 6 columns"));
        }
        let timestamp: f64 = cols[0].parse().map_err(|_| bad(line_no, "bad time"))?;
        let ip = cols[1]
            .strip_prefix("IP")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(line_no, "bad IP alias"))?;
        let ua = cols[2]
            .strip_prefix("UA")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(line_no, "bad UA alias"))?;
        let elapsed_ms = cols[3].parse().map_err(|_| bad(line_no, "bad elapsed"))?;
        let bytes = cols[4].parse().map_err(|_| bad(line_no, "bad bytes"))?;
        let url_id = cols[5].parse().map_err(|_| bad(line_no, "bad URL id"))?;
        records.push(CleanedRecord {
            timestamp,
            user_key: UserKey { ip, ua },
            elapsed_ms,
            bytes,
            url_id,
        });
    }
    Ok(records)
}

/// Writes the URL map as `url_id<TAB>url` lines.
pub fn write_url_map<W: Write>(mut w: W, map: &UrlMap) -> Result<()> {
    for (id, url) in map.iter() {
        writeln!(w, "{id}\t{url}")?;
    }
    Ok(())
}

/// Reads a URL map file; ids must be dense and in order.
pub fn read_url_map<R: BufRead>(reader: R) -> Result<UrlMap> {
    let mut map = UrlMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let (id_part, url) = line.split_once('\t').ok_or_else(|| CoreError::BadFormat {
            what: "URL map file".to_string(),
            line: idx + 1,
            reason: "expected url_id<TAB>url".to_string(),
        })?;
        let id: u32 = id_part.parse().map_err(|_| CoreError::BadFormat {
            what: "URL map file".to_string(),
            line: idx + 1,
            reason: "bad url id".to_string(),
        })?;
        let assigned = map.intern(url);
        if assigned != id {
            return Err(CoreError::BadFormat {
                what: "URL map file".to_string(),
                line: idx + 1,
                reason: format!("non-dense id {id} (expected {assigned})"),
            });
        }
    }
    Ok(map)
}

/// Writes clean-run counters as `key<TAB>value` lines.
pub fn write_clean_stats<W: Write>(mut w: W, stats: &CleanStats) -> Result<()> {
    writeln!(w, "input_lines\t{}", stats.input_lines)?;
    writeln!(w, "parse_errors\t{}", stats.parse_errors)?;
    writeln!(w, "dropped_suffix\t{}", stats.dropped_suffix)?;
    writeln!(w, "dropped_robot\t{}", stats.dropped_robot)?;
    writeln!(w, "dropped_status\t{}", stats.dropped_status)?;
    writeln!(w, "kept\t{}", stats.kept)?;
    Ok(())
}

/// Reads the counters written by [`write_clean_stats`].
pub fn read_clean_stats<R: BufRead>(reader: R) -> Result<CleanStats> {
    let mut values: BTreeMap<String, u64> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let (key, value) = line.split_once('\t').ok_or_else(|| CoreError::BadFormat {
            what: "clean stats file".to_string(),
            line: idx + 1,
            reason: "expected key<TAB>value".to_string(),
        })?;
        let value: u64 = value.parse().map_err(|_| CoreError::BadFormat {
            what: "clean stats file".to_string(),
            line: idx + 1,
            reason: "bad counter".to_string(),
        })?;
        values.insert(key.to_string(), value);
    }
    let get = |key: &str| values.get(key).copied().unwrap_or(0);
    Ok(CleanStats {
        input_lines: get("input_lines"),
        parse_errors: get("parse_errors"),
        dropped_suffix: get("dropped_suffix"),
        dropped_robot: get("dropped_robot"),
        dropped_status: get("dropped_status"),
        kept: get("kept"),
    })
}
