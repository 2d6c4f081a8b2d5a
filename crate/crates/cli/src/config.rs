//! Pipeline configuration: one flat key-value file plus CLI overrides.
//!
//! The file holds `key = value` lines (`#` starts a comment). Unknown keys
//! are rejected so a typo cannot silently fall back to a default. Flags
//! always win over the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use webprof_core::sessionize::DEFAULT_BETA_SECONDS;
use webprof_core::{Heuristic, VectorScheme, ZeroWeightPolicy};

use crate::CliError;

/// Every tunable of the pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // cleaning
    pub suffixes_file: Option<PathBuf>,
    pub robots_file: Option<PathBuf>,
    pub strip_query: bool,
    pub keep_status: Option<BTreeSet<u16>>,
    // sessionization
    pub heuristic: Heuristic,
    pub beta_seconds: f64,
    // features
    pub min_access: u32,
    pub min_session_support: u32,
    pub scheme: VectorScheme,
    pub lb: u32,
    pub ub: u32,
    // clustering sweep
    pub q: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub c_min: usize,
    pub c_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub zero_weight: ZeroWeightPolicy,
    pub validity_weighted: bool,
    // profile extraction
    pub top_k: usize,
    pub membership_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            suffixes_file: None,
            robots_file: None,
            strip_query: true,
            keep_status: None,
            heuristic: Heuristic::Toh1,
            beta_seconds: DEFAULT_BETA_SECONDS,
            min_access: 2,
            min_session_support: 2,
            scheme: VectorScheme::Binary,
            lb: 1,
            ub: 6,
            q: 2.0,
            tol: 1e-5,
            max_iter: 300,
            c_min: 2,
            c_max: 60,
            restarts: 5,
            seed: 0,
            zero_weight: ZeroWeightPolicy::Exclude,
            validity_weighted: false,
            top_k: 10,
            membership_threshold: 0.5,
        }
    }
}

/// Parses a comma-separated status list like `200,304`.
pub fn parse_status_list(s: &str) -> Result<BTreeSet<u16>, String> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u16>()
                .map_err(|_| format!("bad status code {tok:?}"))
        })
        .collect()
}

impl PipelineConfig {
    /// Applies one `key = value` assignment. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value {value:?} for key {key:?}"))
        }
        match key {
            "suffixes_file" => self.suffixes_file = Some(PathBuf::from(value)),
            "robots_file" => self.robots_file = Some(PathBuf::from(value)),
            "strip_query" => self.strip_query = parse(key, value)?,
            "keep_status" => {
                self.keep_status = if value.eq_ignore_ascii_case("all") || value.is_empty() {
                    None
                } else {
                    Some(parse_status_list(value)?)
                }
            }
            "heuristic" => self.heuristic = value.parse()?,
            "beta_seconds" => self.beta_seconds = parse(key, value)?,
            "min_access" => self.min_access = parse(key, value)?,
            "min_session_support" => self.min_session_support = parse(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "lb" => self.lb = parse(key, value)?,
            "ub" => self.ub = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "c_min" => self.c_min = parse(key, value)?,
            "c_max" => self.c_max = parse(key, value)?,
            "restarts" => self.restarts = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "zero_weight" => self.zero_weight = value.parse()?,
            "validity_weighted" => self.validity_weighted = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "membership_threshold" => self.membership_threshold = parse(key, value)?,
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Loads assignments from a flat key-value file on top of `self`.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(CliError::io(format!("reading config {}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "{}:{}: expected key = value, got {raw:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                CliError::Validation(format!("{}:{}: {e}", path.display(), idx + 1))
            })?;
        }
        Ok(())
    }

    /// Checks every invariant before any stage runs.
    pub fn validate(&self) -> Result<(), String> {
        if !self.beta_seconds.is_finite() || self.beta_seconds <= 0.0 {
            return Err(format!("beta_seconds must be positive, got {}", self.beta_seconds));
        }
        if self.min_access < 1 {
            return Err("min_access must be at least 1".into());
        }
        if self.min_session_support < 1 {
            return Err("min_session_support must be at least 1".into());
        }
        if self.ub <= self.lb {
            return Err(format!(
                "weight upper bound must exceed lower bound (lb = {}, ub = {})",
                self.lb, self.ub
            ));
        }
        if !self.q.is_finite() || self.q <= 1.0 {
            return Err(format!("fuzziness index must exceed 1, got {}", self.q));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be positive".into());
        }
        if self.c_min < 2 {
            return Err(format!("c_min must be at least 2, got {}", self.c_min));
        }
        if self.c_max < self.c_min {
            return Err(format!(
                "sweep range is empty: c_min = {}, c_max = {}",
                self.c_min, self.c_max
            ));
        }
        if self.restarts == 0 {
            return Err("restarts must be positive".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be positive".into());
        }
        if !(0.0..=1.01).contains(&self.membership_threshold) {
            return Err(format!(
                "membership_threshold must lie in [0, 1], got {}",
                self.membership_threshold
            ));
        }
        Ok(())
    }
}
