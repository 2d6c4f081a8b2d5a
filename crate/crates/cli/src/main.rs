//! `webprof` — mine usage profiles from web server access logs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use webprof_cli::config::{parse_status_list, PipelineConfig};
use webprof_cli::pipeline::{
    run_pipeline, stage_clean, stage_features, stage_sessionize, sweep_config,
};
use webprof_cli::report::{assemble_report, emit_report, write_series_pair};
use webprof_cli::{files, CliError};

use webprof_core::fcm::{
    extract_profiles, run_fcm, sweep_clusters, write_model, write_profiles, write_validity_csv,
    FcmConfig, SweepConfig,
};
use webprof_core::features::{read_catalog, read_matrix};
use webprof_core::log_ingest::read_cleaned_tsv;
use webprof_core::sessionize::{identify_users, sessionize_all};
use webprof_core::synth::{clean_fixture, synthetic_log, LogSpec};
use webprof_core::{Error as CoreError, Heuristic, ZeroWeightPolicy};

#[derive(Parser)]
#[command(
    name = "webprof",
    version,
    about = "Convert web access logs into weighted user sessions and cluster them into usage profiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Parse and clean a raw access log.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// File with one URL suffix per line (default: built-in list).
        #[arg(long)]
        suffixes: Option<PathBuf>,
        /// File with one robot user-agent token per line (default: built-in list).
        #[arg(long)]
        robots: Option<PathBuf>,
        /// Remove query strings from kept URLs.
        #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
        strip_query: bool,
        /// Keep only these comma-separated status codes (default: all).
        #[arg(long)]
        keep_status: Option<String>,
    },

    /// Cut cleaned records into per-user sessions.
    Sessionize {
        /// Cleaned record file (clean output).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// toh1 bounds total session duration, toh2 bounds per-page gaps.
        #[arg(long, default_value = "toh1")]
        heuristic: String,
        #[arg(long, default_value_t = 1800.0)]
        beta_seconds: f64,
    },

    /// Filter low-support URLs, weigh sessions, and build the matrix.
    Features {
        /// Compact session file (sessionize output).
        #[arg(long)]
        input: PathBuf,
        /// URL map file (clean output), used for the column catalog.
        #[arg(long)]
        url_map: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_access: u32,
        #[arg(long, default_value_t = 2)]
        min_session_support: u32,
        #[arg(long, default_value = "binary")]
        scheme: String,
        #[arg(long, default_value_t = 1)]
        lb: u32,
        #[arg(long, default_value_t = 6)]
        ub: u32,
    },

    /// Run fuzzy c-means at a fixed cluster count.
    Cluster {
        /// Matrix file (features output).
        #[arg(long)]
        input: PathBuf,
        /// Column catalog file (features output).
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        c: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "exclude")]
        zero_weight: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, default_value_t = 0.5)]
        membership_threshold: f64,
    },

    /// Sweep cluster counts and pick the one with the best validity index.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        c_min: usize,
        #[arg(long, default_value_t = 60)]
        c_max: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "exclude")]
        zero_weight: String,
        /// Scale the validity compactness term by session weights.
        #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
        validity_weighted: bool,
    },

    /// Re-emit the report files from a finished run directory.
    Report {
        /// Run directory holding the pipeline artifacts.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the report files (default: the run directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },

    /// Run the whole pipeline: clean, sessionize, features, sweep, report.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Flat key = value configuration file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        suffixes: Option<PathBuf>,
        #[arg(long)]
        robots: Option<PathBuf>,
        #[arg(long)]
        strip_query: Option<bool>,
        #[arg(long)]
        keep_status: Option<String>,
        #[arg(long)]
        heuristic: Option<String>,
        #[arg(long)]
        beta_seconds: Option<f64>,
        #[arg(long)]
        min_access: Option<u32>,
        #[arg(long)]
        min_session_support: Option<u32>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        lb: Option<u32>,
        #[arg(long)]
        ub: Option<u32>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        c_min: Option<usize>,
        #[arg(long)]
        c_max: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        zero_weight: Option<String>,
        #[arg(long)]
        validity_weighted: Option<bool>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        membership_threshold: Option<f64>,
    },

    /// Compare session counts under both heuristics over a grid of betas.
    CompareHeuristics {
        /// Cleaned record file (clean output).
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated list of thresholds in seconds.
        #[arg(long, default_value = "1800")]
        beta_seconds: String,
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
    },

    /// Sweep the same matrix with its weights and with all-ones weights.
    CompareWeighting {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        c_min: usize,
        #[arg(long, default_value_t = 60)]
        c_max: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "exclude")]
        zero_weight: String,
    },

    /// Emit a synthetic access log (or the authored cleaning fixture).
    GenFixture {
        /// `clean` for the 20-line cleaning fixture, `corpus` for a
        /// randomized multi-user log.
        #[arg(long, default_value = "corpus")]
        kind: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        users: usize,
        #[arg(long, default_value_t = 40)]
        urls: usize,
        #[arg(long, default_value_t = 12)]
        sessions_per_user: usize,
        #[arg(long, default_value_t = 12)]
        max_requests: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("webprof: error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn validation<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Validation(err.to_string())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(CliError::io(format!("opening {}", path.display())))
}

fn stage(name: &'static str) -> impl FnOnce(CoreError) -> CliError {
    move |source| CliError::Stage { stage: name, source }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Clean {
            input,
            output,
            suffixes,
            robots,
            strip_query,
            keep_status,
        } => {
            let mut cfg = PipelineConfig {
                suffixes_file: suffixes,
                robots_file: robots,
                strip_query,
                ..PipelineConfig::default()
            };
            if let Some(list) = keep_status {
                cfg.keep_status = Some(parse_status_list(&list).map_err(validation)?);
            }
            ensure_dir(&output)?;
            let out = stage_clean(&input, &output, &cfg)?;
            let s = out.stats;
            println!(
                "cleaned {} lines: kept {}, dropped {} (suffix) + {} (robot) + {} (status), {} parse errors",
                s.input_lines, s.kept, s.dropped_suffix, s.dropped_robot, s.dropped_status, s.parse_errors
            );
            println!("urls interned: {}", out.url_map.len());
            Ok(())
        }

        Command::Sessionize {
            input,
            output,
            heuristic,
            beta_seconds,
        } => {
            let heuristic: Heuristic = heuristic.parse().map_err(validation)?;
            if !beta_seconds.is_finite() || beta_seconds <= 0.0 {
                return Err(CliError::Validation(format!(
                    "beta_seconds must be positive, got {beta_seconds}"
                )));
            }
            let cfg = PipelineConfig {
                heuristic,
                beta_seconds,
                ..PipelineConfig::default()
            };
            ensure_dir(&output)?;
            let records = read_cleaned_tsv(open(&input)?).map_err(stage("sessionize"))?;
            let sessions = stage_sessionize(&records, &output, &cfg)?;
            println!(
                "{} sessions for {} users ({heuristic}, beta = {beta_seconds} s)",
                sessions.len(),
                identify_users(&records).len()
            );
            Ok(())
        }

        Command::Features {
            input,
            url_map,
            output,
            min_access,
            min_session_support,
            scheme,
            lb,
            ub,
        } => {
            let cfg = PipelineConfig {
                min_access,
                min_session_support,
                scheme: scheme.parse().map_err(validation)?,
                lb,
                ub,
                ..PipelineConfig::default()
            };
            cfg.validate().map_err(CliError::Validation)?;
            ensure_dir(&output)?;
            let sessions = webprof_core::sessionize::read_sessions_compact(open(&input)?)
                .map_err(stage("features"))?;
            let map = webprof_core::log_ingest::read_url_map(open(&url_map)?)
                .map_err(stage("features"))?;
            let matrix = stage_features(&sessions, &map, &output, &cfg)?;
            let zero = matrix.weights.iter().filter(|&&w| w == 0.0).count();
            println!(
                "matrix: {} sessions x {} urls ({}), {} zero-weight sessions",
                matrix.m(),
                matrix.n(),
                matrix.scheme,
                zero
            );
            Ok(())
        }

        Command::Cluster {
            input,
            catalog,
            output,
            c,
            q,
            tol,
            max_iter,
            seed,
            zero_weight,
            top_k,
            membership_threshold,
        } => {
            let zero_weight: ZeroWeightPolicy = zero_weight.parse().map_err(validation)?;
            let cfg = FcmConfig {
                c,
                q,
                tol,
                max_iter,
                seed,
                zero_weight,
            };
            cfg.validate().map_err(stage("cluster"))?;
            ensure_dir(&output)?;

            let mut matrix = read_matrix(open(&input)?).map_err(stage("cluster"))?;
            let catalog = read_catalog(open(&catalog)?).map_err(stage("cluster"))?;
            if catalog.len() != matrix.n() {
                return Err(CliError::Validation(format!(
                    "catalog has {} columns but matrix has {}",
                    catalog.len(),
                    matrix.n()
                )));
            }
            matrix.columns = catalog.iter().map(|(id, _)| *id).collect();

            let model = run_fcm(&matrix, &cfg).map_err(stage("cluster"))?;
            write_model(create(&output, files::MODEL)?, &model).map_err(stage("cluster"))?;
            let profiles = extract_profiles(&model, &matrix, top_k, membership_threshold);
            write_profiles(create(&output, files::PROFILES)?, &profiles, &catalog)
                .map_err(stage("cluster"))?;
            println!(
                "c = {}: J = {}, {} iterations, converged = {}, excluded rows = {}",
                c,
                model.final_objective(),
                model.iterations,
                model.converged,
                model.excluded_rows.len()
            );
            Ok(())
        }

        Command::Sweep {
            input,
            output,
            c_min,
            c_max,
            restarts,
            q,
            tol,
            max_iter,
            seed,
            zero_weight,
            validity_weighted,
        } => {
            let cfg = SweepConfig {
                c_min,
                c_max,
                restarts,
                q,
                tol,
                max_iter,
                seed,
                zero_weight: zero_weight.parse().map_err(validation)?,
                validity_weighted,
            };
            cfg.validate().map_err(stage("sweep"))?;
            ensure_dir(&output)?;
            let matrix = read_matrix(open(&input)?).map_err(stage("sweep"))?;
            let report = sweep_clusters(&matrix, &cfg).map_err(stage("sweep"))?;
            write_validity_csv(create(&output, files::VALIDITY)?, &report)
                .map_err(stage("sweep"))?;
            println!("chosen c = {}", report.chosen_c);
            for skip in &report.skipped {
                println!("skipped c = {}: {}", skip.c, skip.reason);
            }
            Ok(())
        }

        Command::Report { run, output } => {
            let report = assemble_report(&run)?;
            let out = output.unwrap_or(run);
            emit_report(&report, &out)?;
            println!("report written to {}", out.display());
            Ok(())
        }

        Command::Pipeline {
            input,
            output,
            config,
            suffixes,
            robots,
            strip_query,
            keep_status,
            heuristic,
            beta_seconds,
            min_access,
            min_session_support,
            scheme,
            lb,
            ub,
            q,
            tol,
            max_iter,
            c_min,
            c_max,
            restarts,
            seed,
            zero_weight,
            validity_weighted,
            top_k,
            membership_threshold,
        } => {
            let mut cfg = PipelineConfig::default();
            if let Some(path) = config {
                cfg.load_file(&path)?;
            }
            // Flag overrides win over the config file.
            if let Some(path) = suffixes {
                cfg.suffixes_file = Some(path);
            }
            if let Some(path) = robots {
                cfg.robots_file = Some(path);
            }
            let mut set = |key: &str, value: Option<String>| -> Result<(), CliError> {
                if let Some(v) = value {
                    cfg.set(key, &v).map_err(CliError::Validation)?;
                }
                Ok(())
            };
            set("strip_query", strip_query.map(|v| v.to_string()))?;
            set("keep_status", keep_status)?;
            set("heuristic", heuristic)?;
            set("beta_seconds", beta_seconds.map(|v| v.to_string()))?;
            set("min_access", min_access.map(|v| v.to_string()))?;
            set("min_session_support", min_session_support.map(|v| v.to_string()))?;
            set("scheme", scheme)?;
            set("lb", lb.map(|v| v.to_string()))?;
            set("ub", ub.map(|v| v.to_string()))?;
            set("q", q.map(|v| v.to_string()))?;
            set("tol", tol.map(|v| v.to_string()))?;
            set("max_iter", max_iter.map(|v| v.to_string()))?;
            set("c_min", c_min.map(|v| v.to_string()))?;
            set("c_max", c_max.map(|v| v.to_string()))?;
            set("restarts", restarts.map(|v| v.to_string()))?;
            set("seed", seed.map(|v| v.to_string()))?;
            set("zero_weight", zero_weight)?;
            set("validity_weighted", validity_weighted.map(|v| v.to_string()))?;
            set("top_k", top_k.map(|v| v.to_string()))?;
            set("membership_threshold", membership_threshold.map(|v| v.to_string()))?;

            let report = run_pipeline(&input, &output, &cfg)?;
            println!(
                "pipeline finished: {} users, {} sessions x {} urls, chosen c = {} (weighted) vs {} (all-ones)",
                report.user_count,
                report.matrix_m,
                report.matrix_n,
                report.chosen_c,
                report.chosen_c_unweighted
            );
            Ok(())
        }

        Command::CompareHeuristics {
            input,
            beta_seconds,
            output,
        } => {
            let betas: Vec<f64> = beta_seconds
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad beta {tok:?}"))
                        .and_then(|b| {
                            if b > 0.0 {
                                Ok(b)
                            } else {
                                Err(format!("beta must be positive, got {b}"))
                            }
                        })
                })
                .collect::<Result<_, _>>()
                .map_err(CliError::Validation)?;
            let records = read_cleaned_tsv(open(&input)?).map_err(stage("sessionize"))?;
            let users = identify_users(&records);
            let mut w = File::create(&output)
                .map(BufWriter::new)
                .map_err(CliError::io(format!("creating {}", output.display())))?;
            writeln!(w, "beta_seconds,toh1_sessions,toh2_sessions")
                .map_err(CliError::io("writing comparison"))?;
            for beta in betas {
                let toh1 = sessionize_all(&users, Heuristic::Toh1, beta).len();
                let toh2 = sessionize_all(&users, Heuristic::Toh2, beta).len();
                writeln!(w, "{beta},{toh1},{toh2}").map_err(CliError::io("writing comparison"))?;
            }
            Ok(())
        }

        Command::CompareWeighting {
            input,
            output,
            c_min,
            c_max,
            restarts,
            q,
            tol,
            max_iter,
            seed,
            zero_weight,
        } => {
            let pipeline_cfg = PipelineConfig {
                c_min,
                c_max,
                restarts,
                q,
                tol,
                max_iter,
                seed,
                zero_weight: zero_weight.parse().map_err(validation)?,
                ..PipelineConfig::default()
            };
            let cfg = sweep_config(&pipeline_cfg);
            cfg.validate().map_err(stage("sweep"))?;
            ensure_dir(&output)?;

            let matrix = read_matrix(open(&input)?).map_err(stage("sweep"))?;
            let x = matrix.to_dense();
            let weighted = webprof_core::fcm::sweep_dense(&x, &matrix.weights, &cfg)
                .map_err(stage("sweep"))?;
            let ones = vec![1.0; matrix.m()];
            let unweighted =
                webprof_core::fcm::sweep_dense(&x, &ones, &cfg).map_err(stage("sweep"))?;

            write_validity_csv(create(&output, files::VALIDITY)?, &weighted)
                .map_err(stage("sweep"))?;
            write_validity_csv(create(&output, files::VALIDITY_UNWEIGHTED)?, &unweighted)
                .map_err(stage("sweep"))?;
            let w_rows: Vec<(usize, f64, f64)> =
                weighted.entries.iter().map(|e| (e.c, e.j, e.s)).collect();
            let u_rows: Vec<(usize, f64, f64)> =
                unweighted.entries.iter().map(|e| (e.c, e.j, e.s)).collect();
            write_series_pair(
                &output,
                files::PERF_INDEX,
                "c,J_weighted,J_unweighted",
                &w_rows,
                &u_rows,
                |row| row.1,
            )?;
            write_series_pair(
                &output,
                files::VALIDITY_VS_C,
                "c,S_weighted,S_unweighted",
                &w_rows,
                &u_rows,
                |row| row.2,
            )?;
            println!(
                "chosen c: {} with session weights, {} with all-ones weights",
                weighted.chosen_c, unweighted.chosen_c
            );
            Ok(())
        }

        Command::GenFixture {
            kind,
            output,
            seed,
            users,
            urls,
            sessions_per_user,
            max_requests,
        } => {
            let text = match kind.as_str() {
                "clean" => clean_fixture(),
                "corpus" => synthetic_log(&LogSpec {
                    users,
                    urls,
                    sessions_per_user,
                    max_requests,
                    seed,
                    ..LogSpec::default()
                }),
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown fixture kind {other:?} (expected clean or corpus)"
                    )))
                }
            };
            if let Some(parent) = output.parent() {
                if !parent.as_os_str().is_empty() {
                    ensure_dir(parent)?;
                }
            }
            std::fs::write(&output, text)
                .map_err(CliError::io(format!("writing {}", output.display())))?;
            println!("fixture written to {}", output.display());
            Ok(())
        }
    }
}
