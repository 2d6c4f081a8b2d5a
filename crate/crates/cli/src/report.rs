//! Run reports: histogram series, validity curves, and the text summary.
//!
//! Reports are assembled *from the persisted artifacts*, never from live
//! pipeline state, so re-running `report` over a finished run directory
//! reproduces the same bytes. Stage wall-clock timings deliberately live in
//! a separate `timings.txt`: they vary between runs and would break the
//! byte-for-byte reproducibility of the report files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use webprof_core::fcm::{read_model, read_validity_csv};
use webprof_core::features::read_matrix;
use webprof_core::log_ingest::{read_clean_stats, read_cleaned_tsv, CleanStats, CleanedRecord};
use webprof_core::sessionize::{read_sessions_compact, SessionStats};
use webprof_core::features::compute_support;

use crate::{files, CliError};

/// Headline numbers of the chosen clustering model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub c: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_j: f64,
    pub excluded_rows: usize,
    pub center_reinits: u32,
}

/// Everything the report files are rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub clean: CleanStats,
    pub user_count: usize,
    /// Session statistics per heuristic, in file order.
    pub session_stats: Vec<(String, SessionStats)>,
    /// (access count, number of URLs with that count).
    pub access_hist: Vec<(u32, u32)>,
    /// (session support, number of URLs with that support).
    pub support_hist: Vec<(u32, u32)>,
    /// (unique URLs in session, number of sessions), after filtering.
    pub size_hist: Vec<(u32, u32)>,
    /// (weight value, number of sessions).
    pub weight_hist: Vec<(f64, u32)>,
    pub matrix_m: usize,
    pub matrix_n: usize,
    pub zero_weight_sessions: usize,
    /// Validity rows (c, J, S) for the weighted sweep.
    pub weighted: Vec<(usize, f64, f64)>,
    /// Validity rows for the all-ones baseline sweep.
    pub unweighted: Vec<(usize, f64, f64)>,
    pub chosen_c: usize,
    pub chosen_c_unweighted: usize,
    pub model: ModelSummary,
    /// (stage, seconds); emitted only to the timings file.
    pub timings: Vec<(String, f64)>,
}

/// Smallest validity index wins; ties go to the smaller cluster count.
pub fn chosen_from_rows(rows: &[(usize, f64, f64)]) -> Option<usize> {
    rows.iter()
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)))
        .map(|r| r.0)
}

fn counter_histogram(values: impl IntoIterator<Item = u32>) -> Vec<(u32, u32)> {
    let mut hist: BTreeMap<u32, u32> = BTreeMap::new();
    for v in values {
        *hist.entry(v).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}

/// Histogram of URL access counts over the cleaned records.
pub fn access_histogram(records: &[CleanedRecord]) -> Vec<(u32, u32)> {
    let mut per_url: BTreeMap<u32, u32> = BTreeMap::new();
    for r in records {
        *per_url.entry(r.url_id).or_insert(0) += 1;
    }
    counter_histogram(per_url.into_values())
}

/// Histogram of per-session weights over the matrix rows.
pub fn weight_histogram(weights: &[f64]) -> Vec<(f64, u32)> {
    let mut sorted: Vec<f64> = weights.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut hist: Vec<(f64, u32)> = Vec::new();
    for w in sorted {
        match hist.last_mut() {
            Some((value, n)) if *value == w => *n += 1,
            _ => hist.push((w, 1)),
        }
    }
    hist
}

fn open_reader(dir: &Path, name: &str) -> Result<BufReader<File>, CliError> {
    let path = dir.join(name);
    File::open(&path)
        .map(BufReader::new)
        .map_err(CliError::io(format!("opening {}", path.display())))
}

fn stage_err(stage: &'static str) -> impl FnOnce(webprof_core::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

/// Reads the per-heuristic session statistics artifact.
pub fn read_session_stats_file(dir: &Path) -> Result<Vec<(String, SessionStats)>, CliError> {
    let text = std::fs::read_to_string(dir.join(files::SESSION_STATS))
        .map_err(CliError::io("reading session stats"))?;
    let mut per: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for line in text.lines() {
        let mut cols = line.split('\t');
        let (Some(h), Some(k), Some(v)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(CliError::Validation(format!(
                "malformed session stats line {line:?}"
            )));
        };
        if !order.iter().any(|o| o == h) {
            order.push(h.to_string());
        }
        let value: f64 = v
            .parse()
            .map_err(|_| CliError::Validation(format!("bad session stat value {v:?}")))?;
        per.entry(h.to_string()).or_default().insert(k.to_string(), value);
    }
    let mut out = Vec::new();
    for h in order {
        let m = &per[&h];
        let get = |k: &str| m.get(k).copied().unwrap_or(0.0);
        out.push((
            h,
            SessionStats {
                session_count: get("session_count") as usize,
                raw_min: get("raw_min") as usize,
                raw_max: get("raw_max") as usize,
                raw_avg: get("raw_avg"),
                unique_min: get("unique_min") as usize,
                unique_max: get("unique_max") as usize,
                unique_avg: get("unique_avg"),
            },
        ));
    }
    Ok(out)
}

/// Writes the per-heuristic session statistics artifact.
pub fn write_session_stats_file<W: Write>(
    mut w: W,
    stats: &[(String, SessionStats)],
) -> std::io::Result<()> {
    for (h, s) in stats {
        writeln!(w, "{h}\tsession_count\t{}", s.session_count)?;
        writeln!(w, "{h}\traw_min\t{}", s.raw_min)?;
        writeln!(w, "{h}\traw_max\t{}", s.raw_max)?;
        writeln!(w, "{h}\traw_avg\t{}", s.raw_avg)?;
        writeln!(w, "{h}\tunique_min\t{}", s.unique_min)?;
        writeln!(w, "{h}\tunique_max\t{}", s.unique_max)?;
        writeln!(w, "{h}\tunique_avg\t{}", s.unique_avg)?;
    }
    Ok(())
}

/// Reads `stage<TAB>seconds` timing lines, tolerating a missing file.
pub fn read_timings(dir: &Path) -> Vec<(String, f64)> {
    let Ok(text) = std::fs::read_to_string(dir.join(files::TIMINGS)) else {
        return Vec::new();
    };
    text.lines()
        .filter_map(|line| {
            let (stage, secs) = line.split_once('\t')?;
            Some((stage.to_string(), secs.parse().ok()?))
        })
        .collect()
}

/// Rebuilds the run report from the artifacts in `run_dir`.
pub fn assemble_report(run_dir: &Path) -> Result<RunReport, CliError> {
    let clean = read_clean_stats(open_reader(run_dir, files::CLEAN_STATS)?)
        .map_err(stage_err("report"))?;
    let records = read_cleaned_tsv(open_reader(run_dir, files::CLEANED)?)
        .map_err(stage_err("report"))?;
    let sessions = read_sessions_compact(open_reader(run_dir, files::SESSIONS)?)
        .map_err(stage_err("report"))?;
    let matrix = read_matrix(open_reader(run_dir, files::MATRIX)?).map_err(stage_err("report"))?;
    let weighted = read_validity_csv(open_reader(run_dir, files::VALIDITY)?)
        .map_err(stage_err("report"))?;
    let unweighted = read_validity_csv(open_reader(run_dir, files::VALIDITY_UNWEIGHTED)?)
        .map_err(stage_err("report"))?;
    let model_file = read_model(
        File::open(run_dir.join(files::MODEL)).map_err(CliError::io("opening model file"))?,
    )
    .map_err(stage_err("report"))?;
    let session_stats = read_session_stats_file(run_dir)?;

    let mut users: Vec<_> = records.iter().map(|r| r.user_key).collect();
    users.sort();
    users.dedup();

    let support = compute_support(&sessions);
    let support_hist = counter_histogram(support.sessions.values().copied());
    let size_hist = counter_histogram(matrix.rows.iter().map(|r| r.len() as u32));

    let chosen_c = chosen_from_rows(&weighted)
        .ok_or_else(|| CliError::Validation("weighted validity file has no rows".into()))?;
    let chosen_c_unweighted = chosen_from_rows(&unweighted)
        .ok_or_else(|| CliError::Validation("unweighted validity file has no rows".into()))?;

    Ok(RunReport {
        clean,
        user_count: users.len(),
        session_stats,
        access_hist: access_histogram(&records),
        support_hist,
        size_hist,
        weight_hist: weight_histogram(&matrix.weights),
        matrix_m: matrix.m(),
        matrix_n: matrix.n(),
        zero_weight_sessions: matrix.weights.iter().filter(|&&w| w == 0.0).count(),
        weighted,
        unweighted,
        chosen_c,
        chosen_c_unweighted,
        model: ModelSummary {
            c: model_file.config.c,
            iterations: model_file.iterations,
            converged: model_file.converged,
            final_j: *model_file.j_trace.last().unwrap_or(&f64::NAN),
            excluded_rows: model_file.excluded_rows.len(),
            center_reinits: model_file.center_reinits,
        },
        timings: read_timings(run_dir),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

/// Writes the five report CSVs and the text summary into `out_dir`.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::io("creating report directory"))?;
    let write_err = CliError::io("writing report file");

    let total_urls: u32 = report.access_hist.iter().map(|&(_, n)| n).sum();
    let mut w = create(out_dir, files::ACCESS_HIST)?;
    writeln!(w, "access_count,urls,percent").map_err(CliError::io("writing access histogram"))?;
    for &(count, urls) in &report.access_hist {
        let percent = 100.0 * urls as f64 / total_urls as f64;
        writeln!(w, "{count},{urls},{percent}")
            .map_err(CliError::io("writing access histogram"))?;
    }

    let mut w = create(out_dir, files::SUPPORT_HIST)?;
    writeln!(w, "session_support,urls").map_err(CliError::io("writing support histogram"))?;
    for &(support, urls) in &report.support_hist {
        writeln!(w, "{support},{urls}").map_err(CliError::io("writing support histogram"))?;
    }

    let mut w = create(out_dir, files::SIZE_HIST)?;
    writeln!(w, "unique_urls,sessions").map_err(CliError::io("writing size histogram"))?;
    for &(unique, sessions) in &report.size_hist {
        writeln!(w, "{unique},{sessions}").map_err(CliError::io("writing size histogram"))?;
    }

    write_series_pair(
        out_dir,
        files::PERF_INDEX,
        "c,J_weighted,J_unweighted",
        &report.weighted,
        &report.unweighted,
        |row| row.1,
    )?;
    write_series_pair(
        out_dir,
        files::VALIDITY_VS_C,
        "c,S_weighted,S_unweighted",
        &report.weighted,
        &report.unweighted,
        |row| row.2,
    )?;

    let mut w = create(out_dir, files::SUMMARY)?;
    render_summary(&mut w, report).map_err(write_err)?;
    Ok(())
}

/// Joins the two sweeps on their common c grid and writes one CSV.
pub fn write_series_pair(
    out_dir: &Path,
    name: &str,
    header: &str,
    weighted: &[(usize, f64, f64)],
    unweighted: &[(usize, f64, f64)],
    pick: fn(&(usize, f64, f64)) -> f64,
) -> Result<(), CliError> {
    let by_c: BTreeMap<usize, &(usize, f64, f64)> =
        unweighted.iter().map(|row| (row.0, row)).collect();
    let mut w = create(out_dir, name)?;
    writeln!(w, "{header}").map_err(CliError::io(format!("writing {name}")))?;
    for row in weighted {
        if let Some(other) = by_c.get(&row.0) {
            writeln!(w, "{},{},{}", row.0, pick(row), pick(other))
                .map_err(CliError::io(format!("writing {name}")))?;
        }
    }
    Ok(())
}

fn render_summary<W: Write>(w: &mut W, r: &RunReport) -> std::io::Result<()> {
    writeln!(w, "webprof run summary")?;
    writeln!(w, "===================")?;
    writeln!(w)?;
    writeln!(w, "cleaning")?;
    writeln!(w, "  input lines    {}", r.clean.input_lines)?;
    writeln!(w, "  parse errors   {}", r.clean.parse_errors)?;
    writeln!(w, "  dropped suffix {}", r.clean.dropped_suffix)?;
    writeln!(w, "  dropped robot  {}", r.clean.dropped_robot)?;
    writeln!(w, "  dropped status {}", r.clean.dropped_status)?;
    writeln!(w, "  kept           {}", r.clean.kept)?;
    writeln!(w)?;
    writeln!(w, "users identified: {}", r.user_count)?;
    writeln!(w)?;
    for (h, s) in &r.session_stats {
        writeln!(w, "sessions ({h})")?;
        writeln!(w, "  count          {}", s.session_count)?;
        writeln!(
            w,
            "  raw urls       min {} / avg {} / max {}",
            s.raw_min, s.raw_avg, s.raw_max
        )?;
        writeln!(
            w,
            "  unique urls    min {} / avg {} / max {}",
            s.unique_min, s.unique_avg, s.unique_max
        )?;
    }
    writeln!(w)?;
    writeln!(
        w,
        "feature matrix: {} sessions x {} urls ({} zero-weight)",
        r.matrix_m, r.matrix_n, r.zero_weight_sessions
    )?;
    writeln!(w)?;
    writeln!(w, "session weights")?;
    for &(value, count) in &r.weight_hist {
        writeln!(w, "  {value}\t{count}")?;
    }
    writeln!(w)?;
    writeln!(
        w,
        "cluster sweep: chosen c = {} (weighted), {} (all-ones baseline)",
        r.chosen_c, r.chosen_c_unweighted
    )?;
    writeln!(
        w,
        "chosen model: c = {}, {} iterations, converged = {}, J = {}, excluded rows = {}, center reinits = {}",
        r.model.c,
        r.model.iterations,
        r.model.converged,
        r.model.final_j,
        r.model.excluded_rows,
        r.model.center_reinits
    )?;
    Ok(())
}

/// Writes the wall-clock timings artifact (excluded from the report's
/// determinism contract).
pub fn write_timings(dir: &Path, timings: &[(String, f64)]) -> Result<(), CliError> {
    let mut w = create(dir, files::TIMINGS)?;
    for (stage, secs) in timings {
        writeln!(w, "{stage}\t{secs}").map_err(CliError::io("writing timings"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chosen_row_prefers_small_validity_then_small_c() {
        let rows = vec![(2, 1.0, 0.5), (3, 0.9, 0.2), (4, 0.8, 0.2)];
        assert_eq!(chosen_from_rows(&rows), Some(3));
        assert_eq!(chosen_from_rows(&[]), None);
    }

    #[test]
    fn weight_histogram_groups_exact_values() {
        let hist = weight_histogram(&[0.2, 1.0, 0.2, 0.0, 1.0, 1.0]);
        assert_eq!(hist, vec![(0.0, 1), (0.2, 2), (1.0, 3)]);
    }

    #[test]
    fn access_histogram_counts_urls_per_frequency() {
        use webprof_core::log_ingest::UserKey;
        let rec = |url| CleanedRecord {
            timestamp: 0.0,
            user_key: UserKey { ip: 1, ua: 1 },
            elapsed_ms: 0,
            bytes: 0,
            url_id: url,
        };
        // URL 1 accessed 3 times, URLs 2 and 3 once each.
        let records = vec![rec(1), rec(1), rec(1), rec(2), rec(3)];
        assert_eq!(access_histogram(&records), vec![(1, 2), (3, 1)]);
    }
}
