//! Weighted fuzzy c-means clustering with validity-based cluster-count
//! selection.
//!
//! The solver minimizes the weighted performance index
//! `J = sum_j sum_i u_ij^q * w_i * ||x_i - v_j||^2` by alternating the
//! center update `v_j = sum_i w_i u_ij^q x_i / sum_i w_i u_ij^q` with the
//! membership update `u_ij = 1 / sum_l (d2_ij / d2_il)^(1/(q-1))` until the
//! membership change drops below `tol`. Both updates are the exact
//! stationary points of `J`, so the objective trace is non-increasing.
//!
//! Cluster counts are compared with the Xie-Beni index
//! `S = sum_j sum_i u_ij^2 ||x_i - v_j||^2 / (m * min_{l != k} ||v_l - v_k||^2)`
//! (unweighted distances, squared memberships); smaller is better.
//!
//! Zero-weight rows make every weighted distance vanish and the membership
//! ratio undefined, so by default they are excluded from the fit and
//! reported separately; an epsilon policy that nudges them to 1e-6 is
//! available for experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SessionMatrix;
use crate::seed;

/// Weight substituted for exact zeros under [`ZeroWeightPolicy::Epsilon`].
pub const EPSILON_WEIGHT: f64 = 1e-6;

/// Memberships below this are omitted from the model file.
pub const MEMBERSHIP_SPARSITY_FLOOR: f64 = 1e-4;

/// Treatment of sessions whose significance weight is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroWeightPolicy {
    /// Drop zero-weight rows from the fit and report them separately.
    Exclude,
    /// Replace zero weights with [`EPSILON_WEIGHT`] and keep the rows.
    Epsilon,
}

impl fmt::Display for ZeroWeightPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroWeightPolicy::Exclude => write!(f, "exclude"),
            ZeroWeightPolicy::Epsilon => write!(f, "epsilon"),
        }
    }
}

impl FromStr for ZeroWeightPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_lowercase().as_str() {
            "exclude" => Ok(ZeroWeightPolicy::Exclude),
            "epsilon" => Ok(ZeroWeightPolicy::Epsilon),
            other => Err(format!(
                "unknown zero-weight policy {other:?} (expected exclude or epsilon)"
            )),
        }
    }
}

/// Configuration of one fuzzy c-means run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    /// Cluster count, at least 2.
    pub c: usize,
    /// Fuzziness index, strictly greater than 1.
    pub q: f64,
    /// Convergence threshold on the max-norm membership change.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub zero_weight: ZeroWeightPolicy,
}

impl FcmConfig {
    /// Defaults: q = 2, tol = 1e-5, max 300 iterations, exclude zero weights.
    pub fn new(c: usize, seed: u64) -> Self {
        FcmConfig {
            c,
            q: 2.0,
            tol: 1e-5,
            max_iter: 300,
            seed,
            zero_weight: ZeroWeightPolicy::Exclude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::InvalidConfig(format!(
                "cluster count must be at least 2, got {}",
                self.c
            )));
        }
        if !self.q.is_finite() || self.q <= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "fuzziness index must exceed 1, got {}",
                self.q
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// A converged (or iteration-capped) fuzzy c-means model.
///
/// `memberships` has one row per *included* data row; `included_rows` and
/// `excluded_rows` map back to original row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmModel {
    pub config: FcmConfig,
    pub memberships: Array2<f64>,
    pub centers: Array2<f64>,
    /// Objective value at initialization and after every iteration.
    pub j_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub included_rows: Vec<usize>,
    pub excluded_rows: Vec<usize>,
    /// Number of empty-cluster reinitialization events.
    pub center_reinits: u32,
}

impl FcmModel {
    pub fn final_objective(&self) -> f64 {
        *self.j_trace.last().expect("trace never empty")
    }
}

fn dist_sq(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Squared Euclidean distance scaled by the row weight.
pub fn weighted_distance_sq(x: &[f64], v: &[f64], w: f64) -> Result<f64> {
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: v.len(),
        });
    }
    let d2: f64 = x
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(w * d2)
}

/// Membership update. Each row becomes
/// `u_ij = 1 / sum_l (d2_ij / d2_il)^(1/(q-1))`; a row coinciding with one
/// or more centers gets full membership in the first such cluster. The
/// per-row weight cancels in the ratio, so weighted and unweighted
/// distances yield the same memberships for positive weights.
pub fn update_memberships(
    x: &Array2<f64>,
    v: &Array2<f64>,
    weights: &[f64],
    q: f64,
) -> Array2<f64> {
    let m = x.nrows();
    let c = v.nrows();
    debug_assert_eq!(x.ncols(), v.ncols());
    debug_assert_eq!(weights.len(), m);
    debug_assert!(q > 1.0);
    let exponent = 1.0 / (q - 1.0);

    let mut u = Array2::zeros((m, c));
    let mut d2 = vec![0.0; c];
    for i in 0..m {
        let xi = x.row(i);
        for (j, slot) in d2.iter_mut().enumerate() {
            *slot = weights[i] * dist_sq(xi, v.row(j));
        }
        if let Some(j0) = d2.iter().position(|&d| d == 0.0) {
            u[[i, j0]] = 1.0;
            continue;
        }
        for j in 0..c {
            let mut denom = 0.0;
            for &dl in &d2 {
                denom += (d2[j] / dl).powf(exponent);
            }
            u[[i, j]] = 1.0 / denom;
        }
    }
    u
}

/// Center update: `v_j = sum_i w_i u_ij^q x_i / sum_i w_i u_ij^q`.
///
/// A cluster whose denominator vanishes is reinitialized from a random data
/// row drawn from `rng`; the returned counter reports how many clusters
/// needed that.
pub fn update_centers(
    x: &Array2<f64>,
    u: &Array2<f64>,
    weights: &[f64],
    q: f64,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, u32) {
    let (m, n) = x.dim();
    let c = u.ncols();
    debug_assert_eq!(u.nrows(), m);
    debug_assert_eq!(weights.len(), m);

    let mut v = Array2::zeros((c, n));
    let mut reinits = 0;
    let mut num = vec![0.0; n];
    for j in 0..c {
        num.iter_mut().for_each(|x| *x = 0.0);
        let mut den = 0.0;
        for i in 0..m {
            let coeff = weights[i] * u[[i, j]].powf(q);
            if coeff == 0.0 {
                continue;
            }
            den += coeff;
            let xi = x.row(i);
            for (k, slot) in num.iter_mut().enumerate() {
                *slot += coeff * xi[k];
            }
        }
        if den <= 0.0 {
            let pick = rng.random_range(0..m);
            v.row_mut(j).assign(&x.row(pick));
            reinits += 1;
        } else {
            for k in 0..n {
                v[[j, k]] = num[k] / den;
            }
        }
    }
    (v, reinits)
}

/// Performance index `J = sum_j sum_i u_ij^q * w_i * ||x_i - v_j||^2`.
pub fn objective(x: &Array2<f64>, u: &Array2<f64>, v: &Array2<f64>, weights: &[f64], q: f64) -> f64 {
    let m = x.nrows();
    let c = v.nrows();
    let mut total = 0.0;
    for j in 0..c {
        let vj = v.row(j);
        for i in 0..m {
            let coeff = u[[i, j]].powf(q) * weights[i];
            if coeff == 0.0 {
                continue;
            }
            total += coeff * dist_sq(x.row(i), vj);
        }
    }
    total
}

/// Draws `c` initial centers from distinct data rows (value-distinct when
/// possible) using the provided RNG. Falls back to duplicate rows only when
/// the data itself has fewer than `c` distinct points.
pub fn init_centers(x: &Array2<f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = x.nrows();
    debug_assert!(m >= c);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);

    let mut chosen: Vec<usize> = Vec::with_capacity(c);
    for &i in &order {
        if chosen.len() == c {
            break;
        }
        if chosen.iter().all(|&j| x.row(i) != x.row(j)) {
            chosen.push(i);
        }
    }
    if chosen.len() < c {
        for &i in &order {
            if chosen.len() == c {
                break;
            }
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
    }

    let mut v = Array2::zeros((c, x.ncols()));
    for (j, &i) in chosen.iter().enumerate() {
        v.row_mut(j).assign(&x.row(i));
    }
    v
}

/// Splits rows by the zero-weight policy. Returns the rows to fit, their
/// effective weights, and the included/excluded original indices.
fn apply_zero_weight_policy(
    x: &Array2<f64>,
    weights: &[f64],
    policy: ZeroWeightPolicy,
) -> (Array2<f64>, Vec<f64>, Vec<usize>, Vec<usize>) {
    match policy {
        ZeroWeightPolicy::Epsilon => {
            let effective = weights
                .iter()
                .map(|&w| if w == 0.0 { EPSILON_WEIGHT } else { w })
                .collect();
            (x.clone(), effective, (0..x.nrows()).collect(), Vec::new())
        }
        ZeroWeightPolicy::Exclude => {
            let mut included = Vec::new();
            let mut excluded = Vec::new();
            for (i, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    excluded.push(i);
                } else {
                    included.push(i);
                }
            }
            let xi = x.select(Axis(0), &included);
            let wi = included.iter().map(|&i| weights[i]).collect();
            (xi, wi, included, excluded)
        }
    }
}

/// Runs fuzzy c-means on a session matrix.
pub fn run_fcm(matrix: &SessionMatrix, cfg: &FcmConfig) -> Result<FcmModel> {
    run_fcm_dense(&matrix.to_dense(), &matrix.weights, cfg)
}

/// Runs fuzzy c-means on dense rows with per-row weights.
pub fn run_fcm_dense(x: &Array2<f64>, weights: &[f64], cfg: &FcmConfig) -> Result<FcmModel> {
    run_fcm_with_init(x, weights, cfg, None)
}

/// As [`run_fcm_dense`], with optional explicit initial centers (used for
/// data-independent initialization in equivariance checks).
pub fn run_fcm_with_init(
    x: &Array2<f64>,
    weights: &[f64],
    cfg: &FcmConfig,
    init: Option<Array2<f64>>,
) -> Result<FcmModel> {
    cfg.validate()?;
    if weights.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            left: weights.len(),
            right: x.nrows(),
        });
    }
    let (xi, wi, included_rows, excluded_rows) =
        apply_zero_weight_policy(x, weights, cfg.zero_weight);
    if xi.nrows() < cfg.c {
        return Err(Error::TooFewRows {
            rows: xi.nrows(),
            clusters: cfg.c,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v0 = match init {
        Some(v) => {
            if v.dim() != (cfg.c, xi.ncols()) {
                return Err(Error::DimensionMismatch {
                    left: v.len(),
                    right: cfg.c * xi.ncols(),
                });
            }
            v
        }
        None => init_centers(&xi, cfg.c, &mut rng),
    };

    let mut u = update_memberships(&xi, &v0, &wi, cfg.q);
    let mut v = v0;
    let mut j_trace = vec![objective(&xi, &u, &v, &wi, cfg.q)];
    let mut converged = false;
    let mut iterations = 0;
    let mut center_reinits = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let (next_v, reinits) = update_centers(&xi, &u, &wi, cfg.q, &mut rng);
        center_reinits += reinits;
        let next_u = update_memberships(&xi, &next_v, &wi, cfg.q);
        j_trace.push(objective(&xi, &next_u, &next_v, &wi, cfg.q));

        let delta = next_u
            .iter()
            .zip(u.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u = next_u;
        v = next_v;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(FcmModel {
        config: cfg.clone(),
        memberships: u,
        centers: v,
        j_trace,
        iterations,
        converged,
        included_rows,
        excluded_rows,
        center_reinits,
    })
}

/// Xie-Beni validity index: compactness over separation, literal form with
/// squared memberships and unweighted distances. Smaller is better.
pub fn xie_beni(x: &Array2<f64>, u: &Array2<f64>, v: &Array2<f64>) -> Result<f64> {
    xie_beni_impl(x, u, v, None)
}

/// Xie-Beni variant whose compactness term is scaled by the row weights.
pub fn xie_beni_weighted(
    x: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    weights: &[f64],
) -> Result<f64> {
    xie_beni_impl(x, u, v, Some(weights))
}

fn xie_beni_impl(
    x: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let m = x.nrows();
    let c = v.nrows();
    if c < 2 {
        return Err(Error::InvalidConfig(
            "validity index needs at least 2 clusters".into(),
        ));
    }
    debug_assert_eq!(u.dim(), (m, c));

    let mut compactness = 0.0;
    for j in 0..c {
        let vj = v.row(j);
        for i in 0..m {
            let w = weights.map_or(1.0, |ws| ws[i]);
            compactness += u[[i, j]] * u[[i, j]] * w * dist_sq(x.row(i), vj);
        }
    }

    let mut min_sep = f64::INFINITY;
    for l in 0..c {
        for k in (l + 1)..c {
            min_sep = min_sep.min(dist_sq(v.row(l), v.row(k)));
        }
    }
    if min_sep == 0.0 {
        return Err(Error::ZeroSeparation);
    }
    Ok(compactness / (m as f64 * min_sep))
}

/// Configuration of a cluster-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub c_min: usize,
    pub c_max: usize,
    /// Seeded restarts per cluster count; the minimum-objective run wins.
    pub restarts: usize,
    pub q: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub zero_weight: ZeroWeightPolicy,
    /// Score validity with weight-scaled compactness instead of the literal
    /// unweighted form.
    pub validity_weighted: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c_min: 2,
            c_max: 60,
            restarts: 5,
            q: 2.0,
            tol: 1e-5,
            max_iter: 300,
            seed: 0,
            zero_weight: ZeroWeightPolicy::Exclude,
            validity_weighted: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_min < 2 {
            return Err(Error::InvalidConfig(format!(
                "sweep lower bound must be at least 2, got {}",
                self.c_min
            )));
        }
        if self.c_max < self.c_min {
            return Err(Error::InvalidConfig(format!(
                "sweep range is empty: c_min = {}, c_max = {}",
                self.c_min, self.c_max
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be positive".into()));
        }
        FcmConfig {
            c: self.c_min,
            q: self.q,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            zero_weight: self.zero_weight,
        }
        .validate()
    }

    /// The seeded per-run configuration for one `(c, restart)` cell.
    pub fn run_config(&self, c: usize, restart: usize) -> FcmConfig {
        FcmConfig {
            c,
            q: self.q,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: seed::derive(self.seed, &[c as u64, restart as u64]),
            zero_weight: self.zero_weight,
        }
    }
}

/// Best run at one cluster count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityEntry {
    pub c: usize,
    /// Minimum objective over the restarts.
    pub j: f64,
    /// Xie-Beni index of the minimum-objective run.
    pub s: f64,
    /// Which restart won (ties go to the lowest index).
    pub restart: usize,
}

/// A cluster count that produced no usable run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValiditySkip {
    pub c: usize,
    pub reason: String,
}

/// Sweep outcome: one entry per usable cluster count and the count with the
/// smallest validity index (smallest c on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub entries: Vec<ValidityEntry>,
    pub skipped: Vec<ValiditySkip>,
    pub chosen_c: usize,
}

/// Sweeps cluster counts on a session matrix.
pub fn sweep_clusters(matrix: &SessionMatrix, cfg: &SweepConfig) -> Result<ValidityReport> {
    sweep_dense(&matrix.to_dense(), &matrix.weights, cfg)
}

/// Sweeps cluster counts on dense rows. Cluster counts are independent and
/// run in parallel; per-run seeds are derived from `(seed, c, restart)`, so
/// scheduling cannot change the result.
pub fn sweep_dense(x: &Array2<f64>, weights: &[f64], cfg: &SweepConfig) -> Result<ValidityReport> {
    cfg.validate()?;
    let (xi, wi, _, _) = apply_zero_weight_policy(x, weights, cfg.zero_weight);

    let results: Vec<(usize, std::result::Result<ValidityEntry, String>)> = (cfg.c_min
        ..=cfg.c_max)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c| {
            let mut best: Option<(f64, usize, FcmModel)> = None;
            let mut first_err: Option<String> = None;
            for restart in 0..cfg.restarts {
                match run_fcm_dense(x, weights, &cfg.run_config(c, restart)) {
                    Ok(model) => {
                        let j = model.final_objective();
                        let better = match &best {
                            Some((best_j, _, _)) => j < *best_j,
                            None => true,
                        };
                        if better {
                            best = Some((j, restart, model));
                        }
                    }
                    Err(err) => {
                        first_err.get_or_insert_with(|| err.to_string());
                    }
                }
            }
            let outcome = match best {
                Some((j, restart, model)) => {
                    let validity = if cfg.validity_weighted {
                        xie_beni_weighted(&xi, &model.memberships, &model.centers, &wi)
                    } else {
                        xie_beni(&xi, &model.memberships, &model.centers)
                    };
                    match validity {
                        Ok(s) => Ok(ValidityEntry { c, j, s, restart }),
                        Err(err) => Err(err.to_string()),
                    }
                }
                None => Err(first_err.unwrap_or_else(|| "no runs attempted".to_string())),
            };
            (c, outcome)
        })
        .collect();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (c, outcome) in results {
        match outcome {
            Ok(entry) => entries.push(entry),
            Err(reason) => skipped.push(ValiditySkip { c, reason }),
        }
    }
    if entries.is_empty() {
        let detail = skipped
            .first()
            .map(|s| format!("c = {}: {}", s.c, s.reason))
            .unwrap_or_default();
        return Err(Error::SweepExhausted(detail));
    }

    let chosen_c = entries
        .iter()
        .min_by(|a, b| a.s.partial_cmp(&b.s).unwrap().then(a.c.cmp(&b.c)))
        .map(|e| e.c)
        .expect("entries non-empty");
    Ok(ValidityReport {
        entries,
        skipped,
        chosen_c,
    })
}

/// Re-runs the winning restart of a sweep entry to materialize its model.
pub fn refit_entry(
    x: &Array2<f64>,
    weights: &[f64],
    cfg: &SweepConfig,
    entry: &ValidityEntry,
) -> Result<FcmModel> {
    run_fcm_dense(x, weights, &cfg.run_config(entry.c, entry.restart))
}

/// One usage profile: a cluster's top URLs and its member sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub cluster: usize,
    pub center: Vec<f64>,
    /// URL ids ranked by descending center coordinate.
    pub top_urls: Vec<u32>,
    /// Original session indices with membership at or above the reporting
    /// threshold. Sessions can appear in several profiles.
    pub members: Vec<usize>,
}

/// Extracts per-cluster usage profiles from a fitted model.
pub fn extract_profiles(
    model: &FcmModel,
    matrix: &SessionMatrix,
    top_k: usize,
    membership_threshold: f64,
) -> Vec<Profile> {
    let c = model.centers.nrows();
    (0..c)
        .map(|j| {
            let center: Vec<f64> = model.centers.row(j).to_vec();
            let mut ranked: Vec<usize> = (0..center.len()).collect();
            ranked.sort_by(|&a, &b| {
                center[b]
                    .partial_cmp(&center[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let top_urls: Vec<u32> = ranked
                .into_iter()
                .take(top_k)
                .map(|k| matrix.columns[k])
                .collect();
            let members: Vec<usize> = model
                .included_rows
                .iter()
                .enumerate()
                .filter(|&(row, _)| model.memberships[[row, j]] >= membership_threshold)
                .map(|(_, &original)| original)
                .collect();
            Profile {
                cluster: j,
                center,
                top_urls,
                members,
            }
        })
        .collect()
}

/// Serialized model layout (`model.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: FcmConfig,
    pub centers: Vec<Vec<f64>>,
    /// `(original row, cluster, membership)` triplets at or above
    /// [`MEMBERSHIP_SPARSITY_FLOOR`].
    pub memberships: Vec<(usize, usize, f64)>,
    pub j_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub excluded_rows: Vec<usize>,
    pub center_reinits: u32,
}

impl ModelFile {
    pub fn from_model(model: &FcmModel) -> Self {
        let mut memberships = Vec::new();
        for (row, &original) in model.included_rows.iter().enumerate() {
            for j in 0..model.memberships.ncols() {
                let u = model.memberships[[row, j]];
                if u >= MEMBERSHIP_SPARSITY_FLOOR {
                    memberships.push((original, j, u));
                }
            }
        }
        ModelFile {
            config: model.config.clone(),
            centers: model
                .centers
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            memberships,
            j_trace: model.j_trace.clone(),
            iterations: model.iterations,
            converged: model.converged,
            excluded_rows: model.excluded_rows.clone(),
            center_reinits: model.center_reinits,
        }
    }
}

/// Writes the model as pretty-printed JSON.
pub fn write_model<W: Write>(mut w: W, model: &FcmModel) -> Result<()> {
    let file = ModelFile::from_model(model);
    serde_json::to_writer_pretty(&mut w, &file)
        .map_err(|e| Error::InvalidConfig(format!("model serialization failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// Reads a model file written by [`write_model`].
pub fn read_model<R: Read>(r: R) -> Result<ModelFile> {
    serde_json::from_reader(r).map_err(|e| Error::BadFormat {
        what: "model file".to_string(),
        line: 0,
        reason: e.to_string(),
    })
}

/// Writes the validity sweep as CSV with columns `c,J,S`.
pub fn write_validity_csv<W: Write>(mut w: W, report: &ValidityReport) -> Result<()> {
    writeln!(w, "c,J,S")?;
    for e in &report.entries {
        writeln!(w, "{},{},{}", e.c, e.j, e.s)?;
    }
    Ok(())
}

/// Reads `(c, J, S)` rows from a validity CSV.
pub fn read_validity_csv<R: BufRead>(reader: R) -> Result<Vec<(usize, f64, f64)>> {
    let bad = |line: usize, reason: &str| Error::BadFormat {
        what: "validity file".to_string(),
        line,
        reason: reason.to_string(),
    };
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line != "c,J,S" {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(idx + 1, "expected 3 columns"));
        }
        let c = cols[0].parse().map_err(|_| bad(idx + 1, "bad c"))?;
        let j = cols[1].parse().map_err(|_| bad(idx + 1, "bad J"))?;
        let s = cols[2].parse().map_err(|_| bad(idx + 1, "bad S"))?;
        rows.push((c, j, s));
    }
    Ok(rows)
}

/// Writes the human-readable per-cluster profile listing.
pub fn write_profiles<W: Write>(
    mut w: W,
    profiles: &[Profile],
    catalog: &[(u32, String)],
) -> Result<()> {
    let urls: BTreeMap<u32, &str> = catalog.iter().map(|(id, url)| (*id, url.as_str())).collect();
    for p in profiles {
        writeln!(w, "cluster {} ({} members)", p.cluster, p.members.len())?;
        for &url_id in &p.top_urls {
            let col = catalog.iter().position(|(id, _)| *id == url_id);
            let coord = col.map_or(0.0, |k| p.center[k]);
            let url = urls.get(&url_id).copied().unwrap_or("?");
            writeln!(w, "  {url_id}\t{coord:.4}\t{url}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn ones(m: usize) -> Vec<f64> {
        vec![1.0; m]
    }

    #[test]
    fn weighted_distance_examples() {
        assert_eq!(weighted_distance_sq(&[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap(), 1.0);
        assert_eq!(weighted_distance_sq(&[2.0, 3.0], &[2.0, 3.0], 5.0).unwrap(), 0.0);
        assert_eq!(weighted_distance_sq(&[1.0, 1.0], &[0.0, 0.0], 0.5).unwrap(), 1.0);
        assert!(matches!(
            weighted_distance_sq(&[1.0], &[1.0, 2.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn membership_is_half_half_when_equidistant() {
        let x = array![[5.0]];
        let v = array![[0.0], [10.0]];
        for q in [1.3, 2.0, 3.5] {
            let u = update_memberships(&x, &v, &ones(1), q);
            assert_relative_eq!(u[[0, 0]], 0.5, max_relative = 1e-12);
            assert_relative_eq!(u[[0, 1]], 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn membership_is_crisp_at_a_center() {
        let x = array![[3.0, 4.0]];
        let v = array![[3.0, 4.0], [0.0, 0.0], [9.0, 9.0]];
        let u = update_memberships(&x, &v, &ones(1), 2.0);
        assert_eq!(u.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn membership_matches_hand_computed_ratio() {
        // x = 2 against centers {0, 10} at q = 2: distances 4 and 64, so
        // u1 = (1/4) / (1/4 + 1/64) = 16/17 and u2 = 1/17.
        let x = array![[2.0]];
        let v = array![[0.0], [10.0]];
        let u = update_memberships(&x, &v, &ones(1), 2.0);
        assert_relative_eq!(u[[0, 0]], 16.0 / 17.0, max_relative = 1e-12);
        assert_relative_eq!(u[[0, 1]], 1.0 / 17.0, max_relative = 1e-12);
    }

    #[test]
    fn membership_rows_sum_to_one() {
        let x = array![[0.1, 0.4], [0.9, 0.2], [0.5, 0.5], [0.3, 0.8]];
        let v = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let u = update_memberships(&x, &v, &[0.2, 1.0, 0.7, 3.0], 1.7);
        for i in 0..x.nrows() {
            let sum: f64 = u.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn memberships_ignore_row_weights() {
        let x = array![[0.1, 0.4], [0.9, 0.2], [0.5, 0.5]];
        let v = array![[0.0, 0.0], [1.0, 1.0]];
        let weighted = update_memberships(&x, &v, &[0.3, 2.0, 7.5], 2.0);
        let unweighted = update_memberships(&x, &v, &ones(3), 2.0);
        for (a, b) in weighted.iter().zip(unweighted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn centers_reduce_to_weighted_means_for_crisp_memberships() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        // c = 1, all weights 1: arithmetic mean.
        let x = array![[1.0], [3.0], [8.0]];
        let u = Array2::ones((3, 1));
        let (v, r) = update_centers(&x, &u, &ones(3), 2.0, &mut rng);
        assert_relative_eq!(v[[0, 0]], 4.0, max_relative = 1e-12);
        assert_eq!(r, 0);

        // c = 1, weights {1, 3} on points {0, 4}: weighted mean 3.
        let x = array![[0.0], [4.0]];
        let u = Array2::ones((2, 1));
        let (v, _) = update_centers(&x, &u, &[1.0, 3.0], 2.0, &mut rng);
        assert_relative_eq!(v[[0, 0]], 3.0, max_relative = 1e-12);

        // Crisp memberships recover the two points.
        let x = array![[0.0], [10.0]];
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let (v, _) = update_centers(&x, &u, &ones(2), 2.0, &mut rng);
        assert_eq!(v, array![[0.0], [10.0]]);
    }

    #[test]
    fn empty_cluster_is_reinitialized_from_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = array![[1.0], [2.0], [3.0]];
        let u = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let (v, reinits) = update_centers(&x, &u, &ones(3), 2.0, &mut rng);
        assert_eq!(reinits, 1);
        let reinit_value = v[[1, 0]];
        assert!(
            [1.0, 2.0, 3.0].contains(&reinit_value),
            "reinitialized center {reinit_value} must be a data row"
        );
    }

    #[test]
    fn objective_examples_and_brute_force() {
        // Points sitting exactly on their crisp centers.
        let x = array![[0.0], [10.0]];
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let v = array![[0.0], [10.0]];
        assert_eq!(objective(&x, &u, &v, &ones(2), 2.0), 0.0);

        // All weights zero annihilate the objective.
        assert_eq!(objective(&x, &u, &v, &[0.0, 0.0], 2.0), 0.0);

        // Tiny instance against an independent double loop.
        let x: Array2<f64> = array![[0.2, 1.0], [0.9, 0.1], [0.5, 0.7]];
        let u: Array2<f64> = array![[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]];
        let v: Array2<f64> = array![[0.0, 1.0], [1.0, 0.0]];
        let w = [0.5, 1.0, 2.0];
        let q = 2.3;
        let mut expected = 0.0;
        for j in 0..2 {
            for i in 0..3 {
                let mut d2 = 0.0;
                for k in 0..2 {
                    let d = x[[i, k]] - v[[j, k]];
                    d2 += d * d;
                }
                expected += u[[i, j]].powf(q) * w[i] * d2;
            }
        }
        assert_relative_eq!(
            objective(&x, &u, &v, &w, q),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fit_separates_two_obvious_blobs() {
        let x = array![[0.0], [0.0], [10.0], [10.0]];
        let cfg = FcmConfig::new(2, 11);
        let model = run_fcm_dense(&x, &ones(4), &cfg).unwrap();
        assert!(model.converged);

        let mut centers: Vec<f64> = model.centers.column(0).to_vec();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] - 0.0).abs() < 0.5, "low center at {}", centers[0]);
        assert!((centers[1] - 10.0).abs() < 0.5, "high center at {}", centers[1]);

        for i in 0..4 {
            let max_u = model.memberships.row(i).fold(0.0f64, |a, &b| a.max(b));
            assert!(max_u > 0.95, "point {i} max membership {max_u}");
        }
    }

    #[test]
    fn fit_handles_coincident_points_without_crashing() {
        let x = array![[1.0, 1.0], [1.0, 1.0]];
        let cfg = FcmConfig::new(2, 3);
        let model = run_fcm_dense(&x, &ones(2), &cfg).unwrap();
        assert_eq!(model.memberships.nrows(), 2);
        for i in 0..2 {
            let sum: f64 = model.memberships.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_is_deterministic_for_a_fixed_seed() {
        let x = crate::synth::gaussian_blobs(&[[0.0, 0.0], [6.0, 6.0], [0.0, 6.0]], 15, 0.4, 99);
        let cfg = FcmConfig::new(3, 1234);
        let a = run_fcm_dense(&x, &ones(45), &cfg).unwrap();
        let b = run_fcm_dense(&x, &ones(45), &cfg).unwrap();
        assert_eq!(a.memberships, b.memberships);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.j_trace, b.j_trace);
    }

    #[test]
    fn fit_rejects_more_clusters_than_rows() {
        let x = array![[0.0], [1.0]];
        let cfg = FcmConfig::new(3, 0);
        assert!(matches!(
            run_fcm_dense(&x, &ones(2), &cfg),
            Err(Error::TooFewRows { rows: 2, clusters: 3 })
        ));
    }

    #[test]
    fn objective_trace_descends() {
        for seed in 0..5u64 {
            let x = crate::synth::uniform_rows(60, 5, seed);
            let mut cfg = FcmConfig::new(4, seed * 7 + 1);
            cfg.q = 1.6 + 0.3 * seed as f64;
            let model = run_fcm_dense(&x, &ones(60), &cfg).unwrap();
            for (t, pair) in model.j_trace.windows(2).enumerate() {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "seed {seed}: J rose at step {t}: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn near_crisp_limit_for_small_fuzziness() {
        let x = crate::synth::gaussian_blobs(&[[0.0, 0.0], [12.0, 12.0]], 10, 0.3, 5);
        let mut cfg = FcmConfig::new(2, 42);
        cfg.q = 1.05;
        let model = run_fcm_dense(&x, &ones(20), &cfg).unwrap();
        for i in 0..20 {
            let max_u = model.memberships.row(i).fold(0.0f64, |a, &b| a.max(b));
            assert!(max_u > 0.99, "point {i}: max membership {max_u}");
        }
    }

    #[test]
    fn memberships_permute_with_data_rows() {
        let x = crate::synth::uniform_rows(12, 3, 8);
        let v0 = array![
            [0.2, 0.2, 0.2],
            [0.8, 0.8, 0.8],
            [0.2, 0.8, 0.5],
        ];
        let w = ones(12);
        let u = update_memberships(&x, &v0, &w, 2.0);

        let perm: Vec<usize> = (0..12).rev().collect();
        let xp = x.select(Axis(0), &perm);
        let up = update_memberships(&xp, &v0, &w, 2.0);
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(
                up.row(new_row).to_vec(),
                u.row(old_row).to_vec(),
                "membership row must follow its data row exactly"
            );
        }

        // A full run from the same data-independent init stays equivariant
        // up to accumulation order.
        let cfg = FcmConfig::new(3, 0);
        let full = run_fcm_with_init(&x, &w, &cfg, Some(v0.clone())).unwrap();
        let full_p = run_fcm_with_init(&xp, &w, &cfg, Some(v0)).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..3 {
                assert!(
                    (full_p.memberships[[new_row, j]] - full.memberships[[old_row, j]]).abs()
                        < 1e-9
                );
            }
        }
    }

    #[test]
    fn zero_weight_rows_are_excluded_or_nudged() {
        let x = array![[0.0], [0.1], [10.0], [10.1], [5.0]];
        let weights = [1.0, 1.0, 1.0, 1.0, 0.0];

        let cfg = FcmConfig::new(2, 21);
        let model = run_fcm_dense(&x, &weights, &cfg).unwrap();
        assert_eq!(model.excluded_rows, vec![4]);
        assert_eq!(model.included_rows, vec![0, 1, 2, 3]);
        assert_eq!(model.memberships.nrows(), 4);

        let mut eps_cfg = cfg.clone();
        eps_cfg.zero_weight = ZeroWeightPolicy::Epsilon;
        let eps_model = run_fcm_dense(&x, &weights, &eps_cfg).unwrap();
        assert!(eps_model.excluded_rows.is_empty());
        assert_eq!(eps_model.memberships.nrows(), 5);
    }

    #[test]
    fn xie_beni_matches_hand_computed_blobs() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let u2 = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let v2 = array![[0.05], [10.05]];
        let s2 = xie_beni(&x, &u2, &v2).unwrap();
        assert_relative_eq!(s2, 2.5e-5, max_relative = 1e-9);

        // Over-segmenting the same data collapses the separation term.
        let u3 = array![
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0]
        ];
        let v3 = array![[0.05], [10.0], [10.1]];
        let s3 = xie_beni(&x, &u3, &v3).unwrap();
        assert_relative_eq!(s3, 0.125, max_relative = 1e-9);
        assert!(s3 > s2);
    }

    #[test]
    fn xie_beni_zero_for_points_on_centers() {
        let x = array![[0.0], [10.0]];
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let v = array![[0.0], [10.0]];
        assert_eq!(xie_beni(&x, &u, &v).unwrap(), 0.0);
    }

    #[test]
    fn weighted_validity_reduces_to_literal_form_for_unit_weights() {
        let x = array![[0.0], [0.3], [9.0], [9.4]];
        let u = array![[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.2, 0.8]];
        let v = array![[0.15], [9.2]];
        let literal = xie_beni(&x, &u, &v).unwrap();
        let weighted = xie_beni_weighted(&x, &u, &v, &ones(4)).unwrap();
        assert_eq!(literal, weighted);
        // Halving every weight halves the compactness term.
        let halved = xie_beni_weighted(&x, &u, &v, &[0.5; 4]).unwrap();
        assert_relative_eq!(halved, literal / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn xie_beni_rejects_coincident_centers() {
        let x = array![[0.0], [1.0]];
        let u = array![[0.5, 0.5], [0.5, 0.5]];
        let v = array![[3.0], [3.0]];
        assert!(matches!(xie_beni(&x, &u, &v), Err(Error::ZeroSeparation)));
    }

    #[test]
    fn sweep_recovers_planted_blob_count() {
        let x = crate::synth::gaussian_blobs(
            &[[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]],
            20,
            0.5,
            17,
        );
        let cfg = SweepConfig {
            c_min: 2,
            c_max: 6,
            restarts: 4,
            seed: 5,
            ..SweepConfig::default()
        };
        let report = sweep_dense(&x, &ones(60), &cfg).unwrap();
        assert_eq!(report.chosen_c, 3);
        assert_eq!(report.entries.len(), 5);
    }

    #[test]
    fn sweep_is_deterministic_and_respects_degenerate_range() {
        let x = crate::synth::gaussian_blobs(&[[0.0, 0.0], [9.0, 9.0]], 12, 0.4, 2);
        let cfg = SweepConfig {
            c_min: 3,
            c_max: 3,
            restarts: 3,
            seed: 77,
            ..SweepConfig::default()
        };
        let a = sweep_dense(&x, &ones(24), &cfg).unwrap();
        let b = sweep_dense(&x, &ones(24), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chosen_c, 3);
    }

    #[test]
    fn sweep_skips_impossible_counts() {
        // Only 4 rows: c = 5 and 6 cannot run and must be recorded.
        let x = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let cfg = SweepConfig {
            c_min: 2,
            c_max: 6,
            restarts: 2,
            seed: 3,
            ..SweepConfig::default()
        };
        let report = sweep_dense(&x, &ones(4), &cfg).unwrap();
        let skipped_cs: Vec<usize> = report.skipped.iter().map(|s| s.c).collect();
        assert!(skipped_cs.contains(&5));
        assert!(skipped_cs.contains(&6));
        assert!(report.entries.iter().all(|e| e.c <= 4));
    }

    #[test]
    fn profiles_rank_urls_and_filter_members() {
        let matrix = SessionMatrix {
            scheme: crate::features::VectorScheme::Binary,
            columns: vec![10, 20, 30],
            rows: vec![vec![(0, 1.0)], vec![(2, 1.0)]],
            weights: vec![1.0, 1.0],
        };
        let model = FcmModel {
            config: FcmConfig::new(2, 0),
            memberships: array![[0.9, 0.1], [0.2, 0.8]],
            centers: array![[0.9, 0.1, 0.8], [0.1, 0.7, 0.2]],
            j_trace: vec![1.0],
            iterations: 1,
            converged: true,
            included_rows: vec![0, 1],
            excluded_rows: vec![],
            center_reinits: 0,
        };

        let profiles = extract_profiles(&model, &matrix, 2, 0.5);
        assert_eq!(profiles[0].top_urls, vec![10, 30]);
        assert_eq!(profiles[0].members, vec![0]);
        assert_eq!(profiles[1].members, vec![1]);

        let all = extract_profiles(&model, &matrix, 3, 0.0);
        assert_eq!(all[0].members, vec![0, 1]);
        assert_eq!(all[1].members, vec![0, 1]);

        let none = extract_profiles(&model, &matrix, 3, 1.01);
        assert!(none[0].members.is_empty());
        assert!(none[1].members.is_empty());
    }

    #[test]
    fn model_file_round_trips() {
        let x = array![[0.0], [0.2], [7.0], [7.3]];
        let cfg = FcmConfig::new(2, 9);
        let model = run_fcm_dense(&x, &[1.0, 0.0, 1.0, 1.0], &cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, ModelFile::from_model(&model));
        assert_eq!(back.excluded_rows, vec![1]);
        // Original row indices appear in the sparse memberships.
        assert!(back.memberships.iter().all(|&(i, _, _)| i != 1));
    }

    #[test]
    fn validity_csv_round_trips() {
        let report = ValidityReport {
            entries: vec![
                ValidityEntry { c: 2, j: 12.5, s: 0.25, restart: 0 },
                ValidityEntry { c: 3, j: 8.75, s: 0.125, restart: 2 },
            ],
            skipped: vec![],
            chosen_c: 3,
        };
        let mut buf = Vec::new();
        write_validity_csv(&mut buf, &report).unwrap();
        let rows = read_validity_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![(2, 12.5, 0.25), (3, 8.75, 0.125)]);
    }
}
