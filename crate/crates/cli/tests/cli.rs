//! End-to-end checks of the command line surface: exit codes, stage
//! chaining, and report re-emission.

use std::path::Path;
use std::process::{Command, Output};

fn webprof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webprof"))
        .args(args)
        .output()
        .expect("spawn webprof")
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("access.log");
    std::fs::write(&log, "").unwrap();
    let out = webprof(&[
        "pipeline",
        "--input",
        &path_str(&log),
        "--output",
        &path_str(&dir.path().join("out")),
        "--lb",
        "6",
        "--ub",
        "6",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out").join("cleaned.tsv").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "seed = 1\nmystery_flag = yes\n").unwrap();
    let log = dir.path().join("access.log");
    std::fs::write(&log, "").unwrap();
    let out = webprof(&[
        "pipeline",
        "--input",
        &path_str(&log),
        "--output",
        &path_str(&dir.path().join("out")),
        "--config",
        &path_str(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mystery_flag"), "stderr: {stderr}");
}

#[test]
fn missing_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = webprof(&[
        "clean",
        "--input",
        &path_str(&dir.path().join("no_such.log")),
        "--output",
        &path_str(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_stage_leaves_marker_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("access.log");
    // Valid log, but far fewer sessions than the sweep upper bound.
    let out = webprof(&[
        "gen-fixture",
        "--kind",
        "clean",
        "--output",
        &path_str(&log),
    ]);
    assert!(out.status.success());
    let run_dir = dir.path().join("out");
    let out = webprof(&[
        "pipeline",
        "--input",
        &path_str(&log),
        "--output",
        &path_str(&run_dir),
        "--c-max",
        "60",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let marker = std::fs::read_to_string(run_dir.join("FAILED.txt")).unwrap();
    assert!(marker.contains("stage: sweep"), "marker: {marker}");
    // Earlier artifacts survive the failure.
    assert!(run_dir.join("cleaned.tsv").exists());
    assert!(run_dir.join("matrix.txt").exists());
}

/// One pass over every stage subcommand, chained by their file artifacts.
#[test]
fn stage_subcommands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("access.log");
    let stage_dir = dir.path().join("stages");
    assert!(webprof(&[
        "gen-fixture",
        "--kind",
        "corpus",
        "--seed",
        "13",
        "--users",
        "12",
        "--sessions-per-user",
        "6",
        "--output",
        &path_str(&log),
    ])
    .status
    .success());

    let sd = path_str(&stage_dir);
    let out = webprof(&["clean", "--input", &path_str(&log), "--output", &sd]);
    assert!(out.status.success(), "clean: {}", String::from_utf8_lossy(&out.stderr));

    let cleaned = path_str(&stage_dir.join("cleaned.tsv"));
    let out = webprof(&[
        "sessionize",
        "--input",
        &cleaned,
        "--output",
        &sd,
        "--heuristic",
        "toh1",
        "--beta-seconds",
        "1800",
    ]);
    assert!(out.status.success(), "sessionize: {}", String::from_utf8_lossy(&out.stderr));

    let out = webprof(&[
        "features",
        "--input",
        &path_str(&stage_dir.join("sessions.tsv")),
        "--url-map",
        &path_str(&stage_dir.join("urlmap.tsv")),
        "--output",
        &sd,
    ]);
    assert!(out.status.success(), "features: {}", String::from_utf8_lossy(&out.stderr));

    let matrix = path_str(&stage_dir.join("matrix.txt"));
    let out = webprof(&[
        "cluster",
        "--input",
        &matrix,
        "--catalog",
        &path_str(&stage_dir.join("catalog.tsv")),
        "--output",
        &sd,
        "--c",
        "4",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "cluster: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stage_dir.join("model.json").exists());
    assert!(stage_dir.join("profiles.txt").exists());

    let out = webprof(&[
        "sweep",
        "--input",
        &matrix,
        "--output",
        &sd,
        "--c-min",
        "2",
        "--c-max",
        "6",
        "--restarts",
        "3",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "sweep: {}", String::from_utf8_lossy(&out.stderr));
    let validity = std::fs::read_to_string(stage_dir.join("validity.csv")).unwrap();
    assert!(validity.starts_with("c,J,S\n"));
    assert_eq!(validity.lines().count(), 6, "validity: {validity}");

    let out = webprof(&[
        "compare-heuristics",
        "--input",
        &cleaned,
        "--beta-seconds",
        "900,1800",
        "--output",
        &path_str(&stage_dir.join("heuristics.csv")),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(stage_dir.join("heuristics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("beta_seconds,toh1_sessions,toh2_sessions"));
    assert_eq!(lines.count(), 2);

    let out = webprof(&[
        "compare-weighting",
        "--input",
        &matrix,
        "--output",
        &path_str(&stage_dir.join("weighting")),
        "--c-min",
        "2",
        "--c-max",
        "6",
        "--restarts",
        "3",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "compare-weighting: {}", String::from_utf8_lossy(&out.stderr));
    let perf = std::fs::read_to_string(stage_dir.join("weighting").join("perf_index_vs_c.csv")).unwrap();
    let val = std::fs::read_to_string(stage_dir.join("weighting").join("validity_vs_c.csv")).unwrap();
    let grid = |text: &str| {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(grid(&perf), grid(&val), "weighted and unweighted grids must match");
}

#[test]
fn report_reemission_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("access.log");
    assert!(webprof(&[
        "gen-fixture",
        "--kind",
        "corpus",
        "--seed",
        "3",
        "--users",
        "12",
        "--sessions-per-user",
        "8",
        "--output",
        &path_str(&log),
    ])
    .status
    .success());

    let run_dir = dir.path().join("run");
    let out = webprof(&[
        "pipeline",
        "--input",
        &path_str(&log),
        "--output",
        &path_str(&run_dir),
        "--seed",
        "5",
        "--c-max",
        "8",
    ]);
    assert!(out.status.success(), "pipeline: {}", String::from_utf8_lossy(&out.stderr));

    let report_files = [
        "url_access_hist.csv",
        "url_session_support.csv",
        "session_size_hist.csv",
        "perf_index_vs_c.csv",
        "validity_vs_c.csv",
        "summary.txt",
    ];
    let originals: Vec<Vec<u8>> = report_files
        .iter()
        .map(|name| std::fs::read(run_dir.join(name)).unwrap())
        .collect();

    let reemitted = dir.path().join("reemitted");
    let out = webprof(&[
        "report",
        "--run",
        &path_str(&run_dir),
        "--output",
        &path_str(&reemitted),
    ]);
    assert!(out.status.success(), "report: {}", String::from_utf8_lossy(&out.stderr));
    for (name, original) in report_files.iter().zip(originals) {
        let again = std::fs::read(reemitted.join(name)).unwrap();
        assert_eq!(again, original, "{name} changed on re-emission");
    }
}

#[test]
fn histogram_totals_match_artifact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("access.log");
    assert!(webprof(&[
        "gen-fixture",
        "--kind",
        "corpus",
        "--seed",
        "21",
        "--users",
        "10",
        "--sessions-per-user",
        "8",
        "--output",
        &path_str(&log),
    ])
    .status
    .success());
    let run_dir = dir.path().join("run");
    assert!(webprof(&[
        "pipeline",
        "--input",
        &path_str(&log),
        "--output",
        &path_str(&run_dir),
        "--seed",
        "2",
        "--c-max",
        "8",
    ])
    .status
    .success());

    // Independent recount: session size histogram totals the matrix rows,
    // and the access histogram totals the distinct URL ids in cleaned.tsv.
    let matrix = std::fs::read_to_string(run_dir.join("matrix.txt")).unwrap();
    let m: usize = matrix.lines().next().unwrap().split(' ').next().unwrap().parse().unwrap();
    let size_hist = std::fs::read_to_string(run_dir.join("session_size_hist.csv")).unwrap();
    let sessions_total: usize = size_hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(sessions_total, m);

    let cleaned = std::fs::read_to_string(run_dir.join("cleaned.tsv")).unwrap();
    let mut urls: Vec<&str> = cleaned
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(5).unwrap())
        .collect();
    urls.sort_unstable();
    urls.dedup();
    let access_hist = std::fs::read_to_string(run_dir.join("url_access_hist.csv")).unwrap();
    let urls_total: usize = access_hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(urls_total, urls.len());

    let percent_total: f64 = access_hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((percent_total - 100.0).abs() < 1e-9, "percents sum to {percent_total}");
}
