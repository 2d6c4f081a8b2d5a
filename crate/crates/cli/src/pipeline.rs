//! Stage orchestration: clean, sessionize, features, sweep, model, report.
//!
//! Every stage persists its artifacts into the run directory before the
//! next stage starts; a failing stage leaves the finished artifacts behind
//! plus a `FAILED.txt` marker naming the stage and cause. All randomness
//! derives from the single root seed in the configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use webprof_core::fcm::{
    refit_entry, sweep_dense, write_model, write_profiles, write_validity_csv, SweepConfig,
};
use webprof_core::features::{
    filter_low_access, filter_low_support, vectorize, weigh_sessions, write_catalog, write_matrix,
    SessionMatrix,
};
use webprof_core::fcm::extract_profiles;
use webprof_core::log_ingest::{
    clean_log, read_token_list, write_clean_stats, write_cleaned_tsv, write_url_map, CleanOutput,
    CleanPolicy,
};
use webprof_core::sessionize::{
    identify_users, session_stats, sessionize_all, write_session_blocks, write_sessions_compact,
    Heuristic,
};
use webprof_core::{seed, Error as CoreError, WeightConfig};

use crate::config::PipelineConfig;
use crate::report::{assemble_report, emit_report, write_session_stats_file, write_timings, RunReport};
use crate::{files, CliError};

/// Seed-derivation tag for the cluster sweeps. Both the weighted and the
/// all-ones sweep share one derived seed so their runs are comparable.
const SWEEP_SEED_TAG: u64 = 1;

fn stage<T>(name: &'static str, result: Result<T, CoreError>) -> Result<T, CliError> {
    result.map_err(|source| CliError::Stage { stage: name, source })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

/// Builds the cleaning policy from the configuration, reading the optional
/// suffix and robot list files.
pub fn build_policy(cfg: &PipelineConfig) -> Result<CleanPolicy, CliError> {
    let mut policy = CleanPolicy::default();
    if let Some(path) = &cfg.suffixes_file {
        let reader = File::open(path)
            .map(BufReader::new)
            .map_err(CliError::io(format!("opening suffix list {}", path.display())))?;
        let tokens = stage("clean", read_token_list(reader))?;
        policy = policy.with_suffixes(tokens);
    }
    if let Some(path) = &cfg.robots_file {
        let reader = File::open(path)
            .map(BufReader::new)
            .map_err(CliError::io(format!("opening robot list {}", path.display())))?;
        let tokens = stage("clean", read_token_list(reader))?;
        policy = policy.with_robot_agents(tokens);
    }
    policy.strip_query = cfg.strip_query;
    policy.status_filter = cfg.keep_status.clone();
    Ok(policy)
}

/// Cleans the raw log and persists the cleaning artifacts.
pub fn stage_clean(
    input: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<CleanOutput, CliError> {
    let policy = build_policy(cfg)?;
    let reader = File::open(input)
        .map(BufReader::new)
        .map_err(CliError::io(format!("opening input log {}", input.display())))?;
    let output = stage("clean", clean_log(reader, &policy))?;

    stage("clean", write_cleaned_tsv(create(out_dir, files::CLEANED)?, &output.records))?;
    stage("clean", write_url_map(create(out_dir, files::URL_MAP)?, &output.url_map))?;
    stage("clean", write_clean_stats(create(out_dir, files::CLEAN_STATS)?, &output.stats))?;
    Ok(output)
}

/// Sessionizes cleaned records under the configured heuristic, persisting
/// the compact and block session files plus per-heuristic statistics.
pub fn stage_sessionize(
    records: &[webprof_core::CleanedRecord],
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<webprof_core::Session>, CliError> {
    let users = identify_users(records);
    let sessions = sessionize_all(&users, cfg.heuristic, cfg.beta_seconds);

    stage(
        "sessionize",
        write_sessions_compact(create(out_dir, files::SESSIONS)?, &sessions),
    )?;
    stage(
        "sessionize",
        write_session_blocks(
            create(out_dir, files::SESSION_BLOCKS)?,
            &users,
            cfg.heuristic,
            cfg.beta_seconds,
        ),
    )?;

    let mut per_heuristic = Vec::new();
    for h in [Heuristic::Toh1, Heuristic::Toh2] {
        let cut = if h == cfg.heuristic {
            sessions.clone()
        } else {
            sessionize_all(&users, h, cfg.beta_seconds)
        };
        let stats = stage("sessionize", session_stats(&cut))?;
        per_heuristic.push((h.to_string(), stats));
    }
    write_session_stats_file(create(out_dir, files::SESSION_STATS)?, &per_heuristic)
        .map_err(CliError::io("writing session stats"))?;
    Ok(sessions)
}

/// Filters low-support URLs, assigns weights, and persists the matrix.
pub fn stage_features(
    sessions: &[webprof_core::Session],
    url_map: &webprof_core::UrlMap,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<SessionMatrix, CliError> {
    let (sessions, _) = filter_low_access(sessions, cfg.min_access);
    let (mut sessions, _) = filter_low_support(&sessions, cfg.min_session_support);
    let weight_cfg = stage("features", WeightConfig::new(cfg.lb, cfg.ub))?;
    weigh_sessions(&mut sessions, &weight_cfg);
    let matrix = stage("features", vectorize(&sessions, cfg.scheme))?;

    stage("features", write_matrix(create(out_dir, files::MATRIX)?, &matrix))?;
    stage(
        "features",
        write_catalog(create(out_dir, files::CATALOG)?, &matrix.columns, url_map),
    )?;
    Ok(matrix)
}

/// Sweep configuration shared by the weighted run and the all-ones
/// baseline: same derived seed, same grid.
pub fn sweep_config(cfg: &PipelineConfig) -> SweepConfig {
    SweepConfig {
        c_min: cfg.c_min,
        c_max: cfg.c_max,
        restarts: cfg.restarts,
        q: cfg.q,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        seed: seed::derive(cfg.seed, &[SWEEP_SEED_TAG]),
        zero_weight: cfg.zero_weight,
        validity_weighted: cfg.validity_weighted,
    }
}

/// Runs both sweeps, fits the chosen model, and persists model artifacts.
pub fn stage_cluster(
    matrix: &SessionMatrix,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<(), CliError> {
    let sweep_cfg = sweep_config(cfg);
    let x = matrix.to_dense();
    if matrix.m() <= cfg.c_max {
        return Err(CliError::Stage {
            stage: "sweep",
            source: CoreError::TooFewRows {
                rows: matrix.m(),
                clusters: cfg.c_max,
            },
        });
    }

    let weighted = stage("sweep", sweep_dense(&x, &matrix.weights, &sweep_cfg))?;
    stage("sweep", write_validity_csv(create(out_dir, files::VALIDITY)?, &weighted))?;

    let ones = vec![1.0; matrix.m()];
    let unweighted = stage("sweep", sweep_dense(&x, &ones, &sweep_cfg))?;
    stage(
        "sweep",
        write_validity_csv(create(out_dir, files::VALIDITY_UNWEIGHTED)?, &unweighted),
    )?;

    let chosen = weighted
        .entries
        .iter()
        .find(|e| e.c == weighted.chosen_c)
        .expect("chosen entry present");
    let model = stage("cluster", refit_entry(&x, &matrix.weights, &sweep_cfg, chosen))?;
    stage("cluster", write_model(create(out_dir, files::MODEL)?, &model))?;

    let profiles = extract_profiles(&model, matrix, cfg.top_k, cfg.membership_threshold);
    let catalog: Vec<(u32, String)> = {
        let reader = File::open(out_dir.join(files::CATALOG))
            .map(BufReader::new)
            .map_err(CliError::io("reopening catalog"))?;
        stage("cluster", webprof_core::features::read_catalog(reader))?
    };
    stage(
        "cluster",
        write_profiles(create(out_dir, files::PROFILES)?, &profiles, &catalog),
    )?;
    Ok(())
}

/// Runs the full pipeline. Identical configuration, input, and seed always
/// produce byte-identical artifacts (timings aside, which live in their own
/// file).
pub fn run_pipeline(
    input: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<RunReport, CliError> {
    cfg.validate().map_err(CliError::Validation)?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io("creating run directory"))?;
    let marker = out_dir.join(files::FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(CliError::io("clearing failure marker"))?;
    }

    let mut timings: Vec<(String, f64)> = Vec::new();
    let outcome = (|| {
        let mut stopwatch = Instant::now();
        let mut lap = |timings: &mut Vec<(String, f64)>, name: &str| {
            timings.push((name.to_string(), stopwatch.elapsed().as_secs_f64()));
            stopwatch = Instant::now();
        };

        let cleaned = stage_clean(input, out_dir, cfg)?;
        lap(&mut timings, "clean");
        let sessions = stage_sessionize(&cleaned.records, out_dir, cfg)?;
        lap(&mut timings, "sessionize");
        let matrix = stage_features(&sessions, &cleaned.url_map, out_dir, cfg)?;
        lap(&mut timings, "features");
        stage_cluster(&matrix, out_dir, cfg)?;
        lap(&mut timings, "cluster");
        Ok(())
    })();

    if let Err(err) = outcome {
        let stage_name = match &err {
            CliError::Stage { stage, .. } => stage,
            _ => "pipeline",
        };
        let _ = std::fs::write(&marker, format!("stage: {stage_name}\nerror: {err}\n"));
        return Err(err);
    }

    write_timings(out_dir, &timings)?;
    let mut report = assemble_report(out_dir)?;
    report.timings = timings;
    emit_report(&report, out_dir)?;
    Ok(report)
}
