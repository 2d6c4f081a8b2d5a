//! Feature selection and session weighting.
//!
//! URLs with too little support are removed before clustering: first by
//! total access count, then by session support (the number of distinct
//! sessions containing the URL). Surviving sessions get a fuzzy
//! significance weight that grows linearly with their unique-URL count, and
//! are finally laid out as a sparse session-by-URL matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::log_ingest::UrlMap;
use crate::sessionize::Session;

/// Per-URL usage counts across a session set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlSupport {
    /// Total occurrences of each URL over all sessions.
    pub access: BTreeMap<u32, u32>,
    /// Number of distinct sessions containing each URL.
    pub sessions: BTreeMap<u32, u32>,
}

impl UrlSupport {
    pub fn access_count(&self, url: u32) -> u32 {
        self.access.get(&url).copied().unwrap_or(0)
    }

    pub fn session_support(&self, url: u32) -> u32 {
        self.sessions.get(&url).copied().unwrap_or(0)
    }
}

/// Counts access and session support for every URL present in `sessions`.
pub fn compute_support(sessions: &[Session]) -> UrlSupport {
    let mut support = UrlSupport::default();
    for s in sessions {
        for (&url, &freq) in &s.url_freqs {
            *support.access.entry(url).or_insert(0) += freq;
            *support.sessions.entry(url).or_insert(0) += 1;
        }
    }
    support
}

/// Rebuilds every session keeping only URLs in `retained`.
fn retain_urls(sessions: &[Session], retained: &BTreeSet<u32>) -> Vec<Session> {
    sessions
        .iter()
        .map(|s| {
            let mut filtered = s.clone();
            filtered.raw_requests.retain(|u| retained.contains(u));
            filtered.url_freqs.retain(|u, _| retained.contains(u));
            filtered
        })
        .collect()
}

/// Removes URLs whose total access count is below `min_access`.
/// Returns the filtered sessions and the retained URL set.
pub fn filter_low_access(
    sessions: &[Session],
    min_access: u32,
) -> (Vec<Session>, BTreeSet<u32>) {
    let support = compute_support(sessions);
    let retained: BTreeSet<u32> = support
        .access
        .iter()
        .filter(|(_, &n)| n >= min_access)
        .map(|(&u, _)| u)
        .collect();
    (retain_urls(sessions, &retained), retained)
}

/// Removes URLs supported by fewer than `min_session_support` sessions.
/// Sessions may become empty; they are kept and handled by the weighting
/// and clustering stages.
pub fn filter_low_support(
    sessions: &[Session],
    min_session_support: u32,
) -> (Vec<Session>, BTreeSet<u32>) {
    let support = compute_support(sessions);
    let retained: BTreeSet<u32> = support
        .sessions
        .iter()
        .filter(|(_, &n)| n >= min_session_support)
        .map(|(&u, _)| u)
        .collect();
    (retain_urls(sessions, &retained), retained)
}

/// Bounds for the session weight membership function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WeightConfig {
    pub lb: u32,
    pub ub: u32,
}

impl WeightConfig {
    pub fn new(lb: u32, ub: u32) -> Result<Self> {
        if ub <= lb {
            return Err(Error::InvalidConfig(format!(
                "weight upper bound must exceed lower bound (lb = {lb}, ub = {ub})"
            )));
        }
        Ok(WeightConfig { lb, ub })
    }
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { lb: 1, ub: 6 }
    }
}

/// Fuzzy significance weight of a session from its unique-URL count:
/// 0 at or below `lb`, 1 at or above `ub`, linear in between.
pub fn assign_session_weight(s: &Session, cfg: &WeightConfig) -> f64 {
    let count = s.unique_count() as f64;
    let lb = cfg.lb as f64;
    let ub = cfg.ub as f64;
    if count <= lb {
        0.0
    } else if count >= ub {
        1.0
    } else {
        (count - lb) / (ub - lb)
    }
}

/// Stores the significance weight on every session in place.
pub fn weigh_sessions(sessions: &mut [Session], cfg: &WeightConfig) {
    for s in sessions.iter_mut() {
        s.weight = assign_session_weight(s, cfg);
    }
}

/// How session vectors encode URL usage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorScheme {
    /// 1 if the session contains the URL, else 0.
    Binary,
    /// Occurrence count of the URL in the session.
    Frequency,
}

impl fmt::Display for VectorScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorScheme::Binary => write!(f, "binary"),
            VectorScheme::Frequency => write!(f, "frequency"),
        }
    }
}

impl FromStr for VectorScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_lowercase().as_str() {
            "binary" => Ok(VectorScheme::Binary),
            "frequency" => Ok(VectorScheme::Frequency),
            other => Err(format!("unknown scheme {other:?} (expected binary or frequency)")),
        }
    }
}

/// Session-by-URL feature matrix in sparse row form.
///
/// Column `k` corresponds to URL id `columns[k]`; columns are ascending by
/// URL id and every column is non-zero somewhere (retained URLs only).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMatrix {
    pub scheme: VectorScheme,
    /// URL id per column, ascending.
    pub columns: Vec<u32>,
    /// Sparse rows: `(column index, value)` with ascending column index.
    pub rows: Vec<Vec<(u32, f64)>>,
    /// Per-session weights, aligned with `rows`.
    pub weights: Vec<f64>,
}

impl SessionMatrix {
    /// Number of sessions (rows).
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of retained URLs (columns).
    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// Column index of a URL id, if retained.
    pub fn column_of(&self, url: u32) -> Option<usize> {
        self.columns.binary_search(&url).ok()
    }

    /// Expands the sparse rows to a dense `m x n` array.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.m(), self.n()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(col, val) in row {
                dense[[i, col as usize]] = val;
            }
        }
        dense
    }
}

/// Builds the feature matrix from sessions. Columns are the union of the
/// sessions' URL ids in ascending order; rows align with session order.
pub fn vectorize(sessions: &[Session], scheme: VectorScheme) -> Result<SessionMatrix> {
    let mut url_set: BTreeSet<u32> = BTreeSet::new();
    for s in sessions {
        url_set.extend(s.url_freqs.keys().copied());
    }
    if url_set.is_empty() {
        return Err(Error::EmptyFeatureSpace);
    }
    let columns: Vec<u32> = url_set.into_iter().collect();
    let col_index: BTreeMap<u32, u32> = columns
        .iter()
        .enumerate()
        .map(|(k, &u)| (u, k as u32))
        .collect();

    let rows: Vec<Vec<(u32, f64)>> = sessions
        .iter()
        .map(|s| {
            s.url_freqs
                .iter()
                .map(|(&url, &freq)| {
                    let value = match scheme {
                        VectorScheme::Binary => 1.0,
                        VectorScheme::Frequency => freq as f64,
                    };
                    (col_index[&url], value)
                })
                .collect()
        })
        .collect();
    let weights: Vec<f64> = sessions.iter().map(|s| s.weight).collect();

    Ok(SessionMatrix {
        scheme,
        columns,
        rows,
        weights,
    })
}

/// Writes the matrix file: a `m n scheme` header line, then one line per
/// session, `weight<TAB>col:val,col:val,...` with ascending column index.
pub fn write_matrix<W: Write>(mut w: W, matrix: &SessionMatrix) -> Result<()> {
    writeln!(w, "{} {} {}", matrix.m(), matrix.n(), matrix.scheme)?;
    for (row, weight) in matrix.rows.iter().zip(&matrix.weights) {
        let cells = row
            .iter()
            .map(|(col, val)| format!("{col}:{val}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{weight}\t{cells}")?;
    }
    Ok(())
}

/// Reads a matrix file. The column catalog is a separate artifact; without
/// it, URL ids default to `1..=n` placeholders.
pub fn read_matrix<R: BufRead>(reader: R) -> Result<SessionMatrix> {
    let bad = |line: usize, reason: String| Error::BadFormat {
        what: "matrix file".to_string(),
        line,
        reason,
    };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".to_string()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(bad(1, "header must be `m n scheme`".to_string()));
    }
    let m: usize = parts[0].parse().map_err(|_| bad(1, "bad m".to_string()))?;
    let n: usize = parts[1].parse().map_err(|_| bad(1, "bad n".to_string()))?;
    let scheme: VectorScheme = parts[2].parse().map_err(|e| bad(1, e))?;

    let mut rows = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        let (weight_part, cells) = line
            .split_once('\t')
            .ok_or_else(|| bad(line_no, "expected weight<TAB>cells".to_string()))?;
        let weight: f64 = weight_part
            .parse()
            .map_err(|_| bad(line_no, "bad weight".to_string()))?;
        let mut row: Vec<(u32, f64)> = Vec::new();
        if !cells.is_empty() {
            for cell in cells.split(',') {
                let (col, val) = cell
                    .split_once(':')
                    .ok_or_else(|| bad(line_no, format!("bad cell {cell:?}")))?;
                let col: u32 = col.parse().map_err(|_| bad(line_no, "bad column".to_string()))?;
                if col as usize >= n {
                    return Err(bad(line_no, format!("column {col} out of range")));
                }
                let val: f64 = val.parse().map_err(|_| bad(line_no, "bad value".to_string()))?;
                row.push((col, val));
            }
        }
        rows.push(row);
        weights.push(weight);
    }
    if rows.len() != m {
        return Err(bad(rows.len() + 1, format!("expected {m} rows, found {}", rows.len())));
    }
    Ok(SessionMatrix {
        scheme,
        columns: (1..=n as u32).collect(),
        rows,
        weights,
    })
}

/// Writes the column catalog: `column<TAB>url_id<TAB>url` per line.
pub fn write_catalog<W: Write>(mut w: W, columns: &[u32], url_map: &UrlMap) -> Result<()> {
    for (k, &url_id) in columns.iter().enumerate() {
        let url = url_map.url(url_id).unwrap_or("");
        writeln!(w, "{k}\t{url_id}\t{url}")?;
    }
    Ok(())
}

/// Reads the column catalog back as `(url_id, url)` pairs in column order.
pub fn read_catalog<R: BufRead>(reader: R) -> Result<Vec<(u32, String)>> {
    let bad = |line: usize, reason: String| Error::BadFormat {
        what: "catalog file".to_string(),
        line,
        reason,
    };
    let mut catalog = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(bad(idx + 1, "expected 3 columns".to_string()));
        }
        let k: usize = cols[0].parse().map_err(|_| bad(idx + 1, "bad column".to_string()))?;
        if k != idx {
            return Err(bad(idx + 1, format!("non-dense column {k}")));
        }
        let url_id: u32 = cols[1].parse().map_err(|_| bad(idx + 1, "bad url id".to_string()))?;
        catalog.push((url_id, cols[2].to_string()));
    }
    Ok(catalog)
}
