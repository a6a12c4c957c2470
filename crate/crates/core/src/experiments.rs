//! Seeded experiment harness: phase transitions, oracle audits, the mixed-norm
//! demo and the matrix-completion demo, plus CSV/JSON persistence.
//!
//! Trial `i` of an experiment draws everything from `child_rng(seed, i)`, and
//! results are collected in trial order, so outputs do not depend on the
//! number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    build_interior_noisefree, check_irrepresentable, global_certificate, oracle_bound_tangent_quadratic,
    oracle_bound_thm2, recovery_bound_thm1, TargetSplit,
};
use crate::error::{Error, Result};
use crate::gaussian::{gordon_tail, lambda_n, lasso_prediction, sample_complexity, width_bound_group, width_mc};
use crate::linalg::{norm2, norm_inf, sub, DenseMatrix};
use crate::losses::{convexity_ratio_gamma, Design, GlmFamily, LossSpec};
use crate::regularizers::{mixed_decompose, FrameKind, GroupStructure, NormDescriptor, RegularizerSpec};
use crate::rsc::glm_oracle_bound;
use crate::rng::{child_rng, derive_seed, normal_vec, random_sign, sample_indices};
use crate::solvers::{solve_basis_pursuit, solve_regularized, EffectiveLoss, SolveOptions, SolveStatus};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable overriding the worker count (`0` = one per core).
pub const THREADS_ENV: &str = "CERTLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Phase,
    OracleAudit,
    MixedDemo,
    MatcompDemo,
}

impl ExperimentKind {
    pub fn stem(self) -> &'static str {
        match self {
            ExperimentKind::Phase => "phase",
            ExperimentKind::OracleAudit => "oracle_audit",
            ExperimentKind::MixedDemo => "mixed_demo",
            ExperimentKind::MatcompDemo => "matcomp_demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Lasso,
    Group,
    Nuclear,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    #[default]
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// File stem; defaults to the experiment name.
    #[serde(default)]
    pub stem: Option<String>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths { dir: default_out_dir(), stem: None }
    }
}

fn default_out_dir() -> String {
    "results".into()
}
fn default_m() -> usize {
    1
}
fn default_eta() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.05
}
fn default_c() -> f64 {
    4.0
}
fn default_fraction() -> f64 {
    0.8
}
fn default_success_tol() -> f64 {
    1e-4
}
fn default_full_groups() -> usize {
    2
}

/// One experiment, fully determined by this value.
///
/// Dimensions: `p` is the ambient dimension (rows for matrix problems), `q` the
/// group count (columns for matrix problems), `m` the group size, `support`
/// the planted `|S|` (groups for the group penalty, scattered singletons for
/// the mixed demo) and `rank` the planted matrix rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub regularizer: PenaltyKind,
    #[serde(default)]
    pub loss: LossFamily,
    pub n_grid: Vec<usize>,
    pub p: usize,
    #[serde(default)]
    pub q: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    pub support: usize,
    #[serde(default)]
    pub rank: usize,
    #[serde(default = "default_full_groups")]
    pub full_groups: usize,
    pub sigma: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c")]
    pub c1: f64,
    #[serde(default = "default_c")]
    pub c2: f64,
    /// Fixed penalty level overriding the `c₁, c₂` policy.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_fraction")]
    pub observed_fraction: f64,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default)]
    pub output: OutputPaths,
    /// Fill `wall_ms`; off by default so tables replay byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn groups(&self) -> Result<GroupStructure> {
        GroupStructure::contiguous(self.q, self.m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(cfg_err("n_grid", "must be a nonempty list of positive sample sizes"));
        }
        for (name, v) in [("p", self.p), ("trials", self.trials), ("m", self.m)] {
            if v == 0 {
                return Err(cfg_err(name, "must be positive"));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(cfg_err("sigma", "must be finite and nonnegative"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(cfg_err("eta", "must lie in (0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(cfg_err("alpha", "must lie in (0, 0.5)"));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("success_tol", self.success_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(cfg_err(name, "must be positive and finite"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(cfg_err("lambda", "must be positive and finite"));
            }
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return Err(cfg_err("observed_fraction", "must lie in (0, 1]"));
        }
        match self.regularizer {
            PenaltyKind::Lasso => {
                if self.support == 0 || self.support > self.p {
                    return Err(cfg_err("support", format!("must lie in 1..={}", self.p)));
                }
            }
            PenaltyKind::Group | PenaltyKind::Mixed => {
                if self.q == 0 || self.q * self.m != self.p {
                    return Err(cfg_err("q", format!("need q·m = p, got q={}, m={}, p={}", self.q, self.m, self.p)));
                }
                let planted = if self.regularizer == PenaltyKind::Group { self.support } else { self.full_groups };
                if self.regularizer == PenaltyKind::Group && planted == 0 {
                    return Err(cfg_err("support", "must be positive"));
                }
                if planted > self.q {
                    return Err(cfg_err("support", format!("at most q = {} groups can be planted", self.q)));
                }
                if self.regularizer == PenaltyKind::Mixed && self.full_groups * self.m + self.support > self.p {
                    return Err(cfg_err("support", "singletons do not fit outside the full groups"));
                }
            }
            PenaltyKind::Nuclear => {
                if self.q == 0 {
                    return Err(cfg_err("q", "matrix column count must be positive"));
                }
                if self.rank == 0 || self.rank > self.p.min(self.q) {
                    return Err(cfg_err("rank", format!("must lie in 1..={}", self.p.min(self.q))));
                }
                // Matrix completion sizes its sample from `observed_fraction`.
                let sized_by_grid = self.kind == ExperimentKind::Phase;
                if let Some(&n) = self.n_grid.iter().find(|&&n| sized_by_grid && n > self.p * self.q) {
                    return Err(cfg_err("n_grid", format!("{n} observations exceed the {} entries", self.p * self.q)));
                }
            }
        }
        match self.kind {
            ExperimentKind::Phase => {
                if self.regularizer == PenaltyKind::Mixed {
                    return Err(cfg_err("regularizer", "phase transitions support lasso, group and nuclear"));
                }
                if self.loss != LossFamily::Quadratic {
                    return Err(cfg_err("loss", "phase transitions use the quadratic loss"));
                }
            }
            ExperimentKind::OracleAudit => {
                if !matches!(self.regularizer, PenaltyKind::Lasso | PenaltyKind::Group) {
                    return Err(cfg_err("regularizer", "oracle audits support lasso and group"));
                }
            }
            ExperimentKind::MixedDemo => {
                if self.regularizer != PenaltyKind::Mixed {
                    return Err(cfg_err("regularizer", "the mixed demo needs `mixed`"));
                }
                if self.sigma == 0.0 && self.lambda.is_none() {
                    return Err(cfg_err("sigma", "the λ policy needs σ > 0 (or set `lambda`)"));
                }
            }
            ExperimentKind::MatcompDemo => {
                if self.regularizer != PenaltyKind::Nuclear {
                    return Err(cfg_err("regularizer", "the matrix-completion demo needs `nuclear`"));
                }
                if self.p > 30 || self.q > 30 || self.rank > 3 {
                    return Err(cfg_err("p", "matrix completion runs at p, q ≤ 30 and rank ≤ 3"));
                }
                if self.observed_fraction < 0.5 {
                    return Err(cfg_err("observed_fraction", "must be at least 0.5"));
                }
            }
        }
        if self.kind != ExperimentKind::Phase && self.loss == LossFamily::Logistic && self.kind != ExperimentKind::OracleAudit
        {
            return Err(cfg_err("loss", "logistic losses are audited only"));
        }
        Ok(())
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.kind.stem().to_string())
    }
}

/// One row of every experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub status: String,
    pub rel_err_l2: Option<f64>,
    pub b_norm_err: Option<f64>,
    pub cert_pass: Option<bool>,
    pub cert_margin: Option<f64>,
    pub slack_thm1: Option<f64>,
    pub slack_oracle: Option<f64>,
    pub wall_ms: f64,
}

impl TrialRecord {
    fn new(trial: usize, seed: u64, n: usize, p: usize) -> Self {
        TrialRecord {
            trial,
            seed,
            n,
            p,
            status: String::new(),
            rel_err_l2: None,
            b_norm_err: None,
            cert_pass: None,
            cert_margin: None,
            slack_thm1: None,
            slack_oracle: None,
            wall_ms: 0.0,
        }
    }

    fn failed(trial: usize, seed: u64, n: usize, p: usize, e: &Error) -> Self {
        let mut r = Self::new(trial, seed, n, p);
        r.status = format!("error: {e}");
        r
    }

    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }
}

/// Any non-finite float is replaced by `None` so every emitted field is finite.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `(trial index, n)` for every trial of a grid, `trials` per grid point.
fn schedule(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.n_grid.iter().flat_map(|&n| std::iter::repeat(n).take(cfg.trials)).enumerate().collect()
}

fn run_trials<T, F>(cfg: &ExperimentConfig, f: F) -> Vec<(TrialRecord, T)>
where
    T: Send + Default,
    F: Fn(usize, u64, usize, &mut rand_chacha::ChaCha8Rng) -> Result<(TrialRecord, T)> + Sync,
{
    schedule(cfg)
        .into_par_iter()
        .map(|(i, n)| {
            let seed = derive_seed(cfg.seed, i as u64);
            let mut rng = child_rng(cfg.seed, i as u64);
            let start = Instant::now();
            let (mut rec, extra) = match f(i, seed, n, &mut rng) {
                Ok(out) => out,
                Err(e) => (TrialRecord::failed(i, seed, n, cfg.p, &e), T::default()),
            };
            if cfg.record_timing {
                rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            }
            (rec, extra)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Instance generation

/// Standard Gaussian `n × p` design.
pub fn gaussian_design<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> DenseMatrix {
    DenseMatrix::from_row_major(n, p, normal_vec(rng, n * p)).expect("shape matches")
}

/// `±1` entries on a random support of size `s`.
pub fn planted_sparse<R: Rng + ?Sized>(rng: &mut R, p: usize, s: usize) -> Vec<f64> {
    let mut beta = vec![0.0; p];
    for i in sample_indices(rng, p, s) {
        beta[i] = random_sign(rng);
    }
    beta
}

/// Unit-norm Gaussian directions on `s` random groups.
pub fn planted_group<R: Rng + ?Sized>(rng: &mut R, groups: &GroupStructure, s: usize) -> Vec<f64> {
    let mut beta = vec![0.0; groups.p()];
    for j in sample_indices(rng, groups.q(), s) {
        let g = groups.group(j);
        let v = normal_vec(rng, g.len());
        let nv = norm2(&v).max(f64::MIN_POSITIVE);
        for (k, &i) in g.iter().enumerate() {
            beta[i] = v[k] / nv;
        }
    }
    beta
}

/// `U Vᵀ` with Gaussian factors, row-major `rows × cols`.
pub fn planted_low_rank<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, rank: usize) -> Vec<f64> {
    let u = normal_vec(rng, rows * rank);
    let v = normal_vec(rng, cols * rank);
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = (0..rank).map(|k| u[i * rank + k] * v[j * rank + k]).sum();
        }
    }
    out
}

/// Two (or `full_groups`) fully dense groups plus scattered `±1` singletons elsewhere.
pub fn planted_mixed<R: Rng + ?Sized>(rng: &mut R, groups: &GroupStructure, full: usize, singletons: usize) -> Vec<f64> {
    let mut beta = vec![0.0; groups.p()];
    let chosen = sample_indices(rng, groups.q(), full);
    let mut used = vec![false; groups.p()];
    for &j in &chosen {
        for &i in groups.group(j) {
            beta[i] = random_sign(rng);
            used[i] = true;
        }
    }
    let free: Vec<usize> = (0..groups.p()).filter(|&i| !used[i]).collect();
    for k in sample_indices(rng, free.len(), singletons) {
        beta[free[k]] = random_sign(rng);
    }
    beta
}

fn observe<R: Rng + ?Sized>(rng: &mut R, clean: Vec<f64>, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return clean;
    }
    let e = normal_vec(rng, clean.len());
    clean.iter().zip(&e).map(|(a, b)| a + sigma * b).collect()
}

fn rel_err(est: &[f64], truth: &[f64]) -> f64 {
    norm2(&sub(est, truth)) / norm2(truth).max(f64::MIN_POSITIVE)
}

struct Planted {
    design: Design,
    beta: Vec<f64>,
    /// Penalty with unit level, used for basis pursuit.
    unit_reg: RegularizerSpec,
}

fn planted_instance<R: Rng + ?Sized>(cfg: &ExperimentConfig, n: usize, rng: &mut R) -> Result<Planted> {
    Ok(match cfg.regularizer {
        PenaltyKind::Lasso => {
            let beta = planted_sparse(rng, cfg.p, cfg.support);
            Planted { design: Design::dense(gaussian_design(rng, n, cfg.p)), beta, unit_reg: RegularizerSpec::Lasso { lambda: 1.0 } }
        }
        PenaltyKind::Group => {
            let groups = cfg.groups()?;
            let beta = planted_group(rng, &groups, cfg.support);
            Planted {
                design: Design::dense(gaussian_design(rng, n, cfg.p)),
                beta,
                unit_reg: RegularizerSpec::Group { lambda: 1.0, groups },
            }
        }
        PenaltyKind::Nuclear => {
            let beta = planted_low_rank(rng, cfg.p, cfg.q, cfg.rank);
            let mut indices = sample_indices(rng, cfg.p * cfg.q, n);
            indices.sort_unstable();
            Planted {
                design: Design::Sampling { dim: cfg.p * cfg.q, indices },
                beta,
                unit_reg: RegularizerSpec::Nuclear { lambda: 1.0, rows: cfg.p, cols: cfg.q },
            }
        }
        PenaltyKind::Mixed => {
            let groups = cfg.groups()?;
            let beta = planted_mixed(rng, &groups, cfg.full_groups, cfg.support);
            Planted {
                design: Design::dense(gaussian_design(rng, n, cfg.p)),
                beta,
                unit_reg: RegularizerSpec::Mixed { lambda1: 1.0, lambda_group: 1.0, groups },
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Phase transition

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Smallest `n` with Gordon failure probability at most `α`.
    pub predicted_n: Option<usize>,
    /// `½ exp(−½(n/√(n+1) − g)²)` at this `n`, when the gap is nonnegative.
    pub failure_bound: Option<f64>,
    /// Closed-form bound on the squared Gaussian width.
    pub width_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub records: Vec<TrialRecord>,
    pub rows: Vec<PhaseRow>,
    pub predicted_n: Option<usize>,
    /// Linear interpolation of the first 50% crossing of the success rate.
    pub crossing_n: Option<f64>,
}

/// Squared-width bound and Gordon sample size for the planted structure.
pub fn phase_prediction(cfg: &ExperimentConfig) -> Result<Option<(f64, usize)>> {
    Ok(match cfg.regularizer {
        PenaltyKind::Lasso if cfg.p >= 2 * cfg.support => {
            let (bound, pred) = lasso_prediction(cfg.support, cfg.p, cfg.eta, cfg.alpha)?;
            Some((bound, pred.n))
        }
        PenaltyKind::Group if cfg.q >= 2 * cfg.support => {
            // Group-normalized signs: ‖e_S‖² = |S|.
            let bound = width_bound_group(cfg.support, cfg.q, cfg.m, cfg.eta, 0.0, cfg.support as f64)?;
            Some((bound, sample_complexity(bound.sqrt(), cfg.alpha)?.n))
        }
        _ => None,
    })
}

/// First `n` where the success rate reaches one half, interpolated linearly.
pub fn crossing_n(rows: &[PhaseRow]) -> Option<f64> {
    let first = rows.first()?;
    if first.rate >= 0.5 {
        return Some(first.n as f64);
    }
    rows.windows(2).find(|w| w[0].rate < 0.5 && w[1].rate >= 0.5).map(|w| {
        let (a, b) = (&w[0], &w[1]);
        a.n as f64 + (0.5 - a.rate) / (b.rate - a.rate) * (b.n as f64 - a.n as f64)
    })
}

fn phase_trial(cfg: &ExperimentConfig, i: usize, seed: u64, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<TrialRecord> {
    let inst = planted_instance(cfg, n, rng)?;
    let y = observe(rng, inst.design.apply(&inst.beta), cfg.sigma);
    let opts = SolveOptions::default();
    let mut rec = TrialRecord::new(i, seed, n, inst.design.ncols());
    let frame = inst.unit_reg.certificate_frame(&inst.beta, cfg.eta)?;
    let sol = if cfg.sigma == 0.0 {
        solve_basis_pursuit(&inst.design, &y, &inst.unit_reg, &opts)?
    } else {
        let lambda = cfg.lambda.unwrap_or(cfg.c1 * cfg.sigma * ((n as f64) * (cfg.p as f64).ln()).sqrt());
        let reg = scaled_reg(&inst.unit_reg, lambda);
        solve_regularized(&LossSpec::Quadratic { design: inst.design.clone(), y }, &reg, &opts)?
    };
    let err = rel_err(&sol.beta, &inst.beta);
    rec.rel_err_l2 = finite(err);
    rec.b_norm_err = finite(frame.b_norm(&sub(&sol.beta, &inst.beta))?);
    rec.status = if sol.status == SolveStatus::Infeasible {
        "infeasible".into()
    } else if err <= cfg.success_tol {
        "success".into()
    } else {
        "failure".into()
    };
    if let Ok(cert) = build_interior_noisefree(&inst.design, &frame) {
        rec.cert_pass = Some(cert.pass);
        rec.cert_margin = finite(cert.margin);
    }
    Ok(rec)
}

fn scaled_reg(unit: &RegularizerSpec, lambda: f64) -> RegularizerSpec {
    match unit.clone() {
        RegularizerSpec::Lasso { .. } => RegularizerSpec::Lasso { lambda },
        RegularizerSpec::Group { groups, .. } => RegularizerSpec::Group { lambda, groups },
        RegularizerSpec::Nuclear { rows, cols, .. } => RegularizerSpec::Nuclear { lambda, rows, cols },
        RegularizerSpec::Mixed { groups, .. } => RegularizerSpec::Mixed { lambda1: lambda, lambda_group: lambda, groups },
    }
}

/// Recovery rate per `n` against the Gordon prediction.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseOutcome> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::Phase {
        return Err(cfg_err("kind", "expected `phase`"));
    }
    let prediction = phase_prediction(cfg)?;
    let records: Vec<TrialRecord> =
        run_trials(cfg, |i, seed, n, rng| phase_trial(cfg, i, seed, n, rng).map(|r| (r, ()))).into_iter().map(|(r, _)| r).collect();
    let rows: Vec<PhaseRow> = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let chunk = &records[k * cfg.trials..(k + 1) * cfg.trials];
            let successes = chunk.iter().filter(|r| r.status == "success").count();
            let failure_bound = prediction.and_then(|(b, _)| {
                let t = gordon_tail(n, b.sqrt(), 0.0);
                t.guaranteed.then_some(t.failure_probability)
            });
            PhaseRow {
                n,
                trials: cfg.trials,
                successes,
                rate: successes as f64 / cfg.trials as f64,
                predicted_n: prediction.map(|(_, n)| n),
                failure_bound,
                width_bound: prediction.map(|(b, _)| b),
            }
        })
        .collect();
    let crossing = crossing_n(&rows);
    Ok(PhaseOutcome { records, rows, predicted_n: prediction.map(|(_, n)| n), crossing_n: crossing })
}

// ---------------------------------------------------------------------------
// Oracle audit

/// Per-trial inequality slacks beyond the two CSV columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditDetail {
    pub eta_tilde: Option<f64>,
    /// `η̃ ≥ η`: the guarantee branch does not apply.
    pub no_guarantee: bool,
    /// The plain certificate problem is unbounded below.
    pub no_certificate: bool,
    /// The same for the `L̄_*` certificate problem.
    pub no_oracle_certificate: bool,
    /// Convexity ratio used for `L̄_*`.
    pub gamma: Option<f64>,
    pub slack_thm1: Option<f64>,
    pub slack_oracle_full: Option<f64>,
    pub slack_oracle_corollary: Option<f64>,
    pub corollary_condition: Option<bool>,
    pub slack_tangent: Option<f64>,
    pub tangent_pass: Option<bool>,
    pub tangent_bound: Option<f64>,
    pub global_bound: Option<f64>,
    pub min_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub records: Vec<TrialRecord>,
    pub details: Vec<AuditDetail>,
    /// Smallest evaluated slack over all trials.
    pub min_slack: Option<f64>,
}

fn audit_lambda(cfg: &ExperimentConfig, n: usize) -> f64 {
    if let Some(l) = cfg.lambda {
        return l;
    }
    let nf = n as f64;
    match (cfg.loss, cfg.regularizer) {
        (LossFamily::Logistic, _) => 0.5 * cfg.c1 * (nf * (cfg.p as f64).ln()).sqrt(),
        (_, _) if cfg.sigma == 0.0 => 1.0,
        (_, PenaltyKind::Group) => cfg.c2 * cfg.sigma * (nf * (cfg.m as f64 + (cfg.q as f64).ln())).sqrt(),
        _ => cfg.c1 * cfg.sigma * (nf * (cfg.p as f64).ln()).sqrt(),
    }
}

fn audit_trial(
    cfg: &ExperimentConfig,
    i: usize,
    seed: u64,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(TrialRecord, AuditDetail)> {
    let (beta_star, unit) = match cfg.regularizer {
        PenaltyKind::Group => {
            let groups = cfg.groups()?;
            (planted_group(rng, &groups, cfg.support), RegularizerSpec::Group { lambda: 1.0, groups })
        }
        _ => (planted_sparse(rng, cfg.p, cfg.support), RegularizerSpec::Lasso { lambda: 1.0 }),
    };
    let x = gaussian_design(rng, n, cfg.p);
    let loss = match cfg.loss {
        LossFamily::Quadratic => {
            let y = observe(rng, x.matvec(&beta_star), cfg.sigma);
            LossSpec::quadratic(x, y)?
        }
        LossFamily::Logistic => {
            let t = x.matvec(&beta_star);
            let y = t.iter().map(|&ti| if rng.random::<f64>() < 1.0 / (1.0 + (-ti).exp()) { 1.0 } else { -1.0 }).collect();
            LossSpec::glm(x, GlmFamily::Logistic, y)?
        }
    };
    let reg = scaled_reg(&unit, audit_lambda(cfg, n));
    let opts = SolveOptions::default();
    let sol = solve_regularized(&loss, &reg, &opts)?;
    let beta_hat = sol.beta;
    let frame = reg.certificate_frame(&beta_star, cfg.eta)?;
    let split = TargetSplit::at(&loss, &frame, &beta_star)?;

    let mut rec = TrialRecord::new(i, seed, n, cfg.p);
    let mut det = AuditDetail { eta_tilde: finite(split.eta_tilde), no_guarantee: split.eta_tilde >= cfg.eta, ..Default::default() };
    rec.rel_err_l2 = finite(rel_err(&beta_hat, &beta_star));
    rec.b_norm_err = finite(frame.b_norm(&sub(&beta_hat, &beta_star))?);

    let mut slacks = Vec::new();
    // Recovery inequality with the plain loss. An unbounded certificate problem means no
    // certificate exists and the inequality is vacuous.
    let plain = EffectiveLoss::plain(&loss);
    let mut thm1 = f64::INFINITY;
    match global_certificate(&plain, &frame, &opts) {
        Ok((cert, report)) => {
            rec.cert_pass = Some(report.pass);
            rec.cert_margin = finite(report.margin);
            thm1 = recovery_bound_thm1(&loss, &reg, &frame, &beta_hat, &cert.q, &cert.delta)?;
            det.slack_thm1 = finite(thm1);
            slacks.push(thm1);
        }
        Err(Error::Unbounded { .. }) => det.no_certificate = true,
        Err(e) => return Err(e),
    }

    // Oracle inequality with L̄_*.
    let amplitude = [&beta_hat, &beta_star].iter().map(|b| norm_inf(&loss.predictors(b))).fold(0.0, f64::max);
    let gamma = convexity_ratio_gamma(&loss, amplitude)?;
    det.gamma = finite(gamma);
    let shifted = EffectiveLoss::shifted(&loss, gamma, &beta_star, &beta_star)?;
    let mut oracle_min = f64::INFINITY;
    match global_certificate(&shifted, &frame, &opts) {
        Ok((cert2, _)) => {
            let oracle = oracle_bound_thm2(&loss, gamma, &reg, &frame, &beta_star, &beta_hat, &cert2.q, &cert2.delta)?;
            det.slack_oracle_full = finite(oracle.full);
            det.corollary_condition = Some(oracle.condition_holds);
            slacks.push(oracle.full);
            oracle_min = oracle.full;
            if oracle.condition_holds {
                det.slack_oracle_corollary = finite(oracle.corollary);
                slacks.push(oracle.corollary);
                oracle_min = oracle_min.min(oracle.corollary);
            }
        }
        Err(Error::Unbounded { .. }) => det.no_oracle_certificate = true,
        Err(e) => return Err(e),
    }

    // Tangent certificate, where H_T is invertible.
    if loss.is_quadratic() {
        if let (Ok(tc), Ok(to)) = (check_irrepresentable(&loss, &frame, &split), oracle_bound_tangent_quadratic(&loss, &frame, &split))
        {
            det.tangent_pass = Some(tc.pass);
            det.tangent_bound = finite(to.bound);
            let lhs = loss.bregman_divergence(&beta_hat, &beta_star)? + (1.0 - cfg.eta) * frame.b_norm(&beta_hat)?;
            let s = to.bound - lhs;
            det.slack_tangent = finite(s);
            if tc.pass {
                slacks.push(s);
                oracle_min = oracle_min.min(s);
            }
        }
    }
    rec.slack_thm1 = finite(thm1);
    rec.slack_oracle = finite(oracle_min);
    det.min_slack = slacks.iter().copied().filter(|v| v.is_finite()).reduce(f64::min);
    if slacks.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("oracle audit slack"));
    }
    rec.status = if det.no_certificate {
        "no_certificate".into()
    } else if det.no_guarantee {
        "no_guarantee".into()
    } else {
        "ok".into()
    };
    Ok((rec, det))
}

/// Solves seeded instances and evaluates every applicable inequality slack.
pub fn run_oracle_audit(cfg: &ExperimentConfig) -> Result<AuditOutcome> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::OracleAudit {
        return Err(cfg_err("kind", "expected `oracle_audit`"));
    }
    let out = run_trials(cfg, |i, seed, n, rng| audit_trial(cfg, i, seed, n, rng));
    let (records, details): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let min_slack = details.iter().filter_map(|d| d.min_slack).reduce(f64::min);
    Ok(AuditOutcome { records, details, min_slack })
}

// ---------------------------------------------------------------------------
// Mixed-norm demo

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedDetail {
    pub lambda1: f64,
    pub lambda_group: f64,
    pub pred_err_lasso: Option<f64>,
    pub pred_err_group: Option<f64>,
    pub pred_err_mixed: Option<f64>,
    /// `S_Γ` from the membership rule `λ_Γ < 2λ₁‖sgn(β̄_Γj)‖₂`.
    pub s_gamma: Vec<usize>,
    /// Groups carrying `β̄″` in the optimal decomposition.
    pub second_groups: Vec<usize>,
    /// `supp(β̄″) ⊆ S_Γ`.
    pub rule_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedOutcome {
    pub records: Vec<TrialRecord>,
    pub details: Vec<MixedDetail>,
}

fn mixed_trial(
    cfg: &ExperimentConfig,
    i: usize,
    seed: u64,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(TrialRecord, MixedDetail)> {
    let groups = cfg.groups()?;
    let beta = planted_mixed(rng, &groups, cfg.full_groups, cfg.support);
    let x = gaussian_design(rng, n, cfg.p);
    let y = observe(rng, x.matvec(&beta), cfg.sigma);
    let nf = n as f64;
    let (lambda1, lambda_group) = match cfg.lambda {
        Some(l) => (l, l * ((cfg.m as f64 + (cfg.q as f64).ln()) / (cfg.p as f64).ln()).sqrt()),
        None => (
            cfg.c1 * cfg.sigma * (nf * (cfg.p as f64).ln()).sqrt(),
            cfg.c2 * cfg.sigma * (nf * (cfg.m as f64 + (cfg.q as f64).ln())).sqrt(),
        ),
    };
    let loss = LossSpec::quadratic(x.clone(), y)?;
    let opts = SolveOptions::default();
    let mixed = RegularizerSpec::Mixed { lambda1, lambda_group, groups: groups.clone() };
    let pred = |reg: &RegularizerSpec| -> Result<(f64, Vec<f64>)> {
        let b = solve_regularized(&loss, reg, &opts)?.beta;
        Ok((norm2(&x.matvec(&sub(&b, &beta))).powi(2), b))
    };
    let (e_lasso, _) = pred(&RegularizerSpec::Lasso { lambda: lambda1 })?;
    let (e_group, _) = pred(&RegularizerSpec::Group { lambda: lambda_group, groups: groups.clone() })?;
    let (e_mixed, b_mixed) = pred(&mixed)?;

    let frame = mixed.certificate_frame(&beta, cfg.eta)?;
    let s_gamma = match &frame.kind {
        FrameKind::Mixed { active_groups, .. } => active_groups.clone(),
        _ => unreachable!("mixed penalty yields a mixed frame"),
    };
    let (_, second) = mixed_decompose(lambda1, lambda_group, &groups, &beta);
    let second_groups: Vec<usize> = (0..groups.q()).filter(|&j| groups.group_norm(j, &second) > 0.0).collect();
    let rule_holds = second_groups.iter().all(|j| s_gamma.contains(j));

    let mut rec = TrialRecord::new(i, seed, n, cfg.p);
    rec.rel_err_l2 = finite(rel_err(&b_mixed, &beta));
    rec.b_norm_err = finite(frame.b_norm(&sub(&b_mixed, &beta))?);
    rec.status = if rule_holds { "ok".into() } else { "rule_violation".into() };
    let det = MixedDetail {
        lambda1,
        lambda_group,
        pred_err_lasso: finite(e_lasso),
        pred_err_group: finite(e_group),
        pred_err_mixed: finite(e_mixed),
        s_gamma,
        second_groups,
        rule_holds,
    };
    Ok((rec, det))
}

/// Lasso, group and mixed estimators on identical data.
pub fn run_mixed_demo(cfg: &ExperimentConfig) -> Result<MixedOutcome> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::MixedDemo {
        return Err(cfg_err("kind", "expected `mixed_demo`"));
    }
    let (records, details) = run_trials(cfg, |i, seed, n, rng| mixed_trial(cfg, i, seed, n, rng)).into_iter().unzip();
    Ok(MixedOutcome { records, details })
}

// ---------------------------------------------------------------------------
// Matrix completion demo

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatcompDetail {
    pub lambda: Option<f64>,
    pub observed: usize,
    pub oracle_bound: Option<f64>,
    pub tangent_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcompOutcome {
    pub records: Vec<TrialRecord>,
    pub details: Vec<MatcompDetail>,
}

fn matcomp_trial(
    cfg: &ExperimentConfig,
    i: usize,
    seed: u64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(TrialRecord, MatcompDetail)> {
    let (rows, cols) = (cfg.p, cfg.q);
    let dim = rows * cols;
    let beta = planted_low_rank(rng, rows, cols, cfg.rank);
    let observed = ((cfg.observed_fraction * dim as f64).round() as usize).clamp(1, dim);
    let mut indices = sample_indices(rng, dim, observed);
    indices.sort_unstable();
    let design = Design::Sampling { dim, indices };
    let y = observe(rng, design.apply(&beta), cfg.sigma);
    let opts = SolveOptions::default();
    let mut rec = TrialRecord::new(i, seed, observed, dim);
    let mut det = MatcompDetail { observed, ..Default::default() };
    if cfg.sigma == 0.0 && cfg.lambda.is_none() {
        let unit = RegularizerSpec::Nuclear { lambda: 1.0, rows, cols };
        let frame = unit.certificate_frame(&beta, cfg.eta)?;
        let sol = solve_basis_pursuit(&design, &y, &unit, &opts)?;
        let err = rel_err(&sol.beta, &beta);
        rec.rel_err_l2 = finite(err);
        rec.b_norm_err = finite(frame.b_norm(&sub(&sol.beta, &beta))?);
        let cert = build_interior_noisefree(&design, &frame);
        if let Ok(c) = &cert {
            rec.cert_pass = Some(c.pass);
            rec.cert_margin = finite(c.margin);
        }
        let certified = matches!(&cert, Ok(c) if c.margin >= 0.1);
        rec.status = match (certified, err <= cfg.success_tol) {
            (true, false) => "certified_but_not_recovered".into(),
            (_, true) => "success".into(),
            (false, false) => "failure".into(),
        };
        return Ok((rec, det));
    }
    let lambda = cfg
        .lambda
        .unwrap_or(cfg.c1 * cfg.sigma * cfg.observed_fraction.sqrt() * ((rows as f64).sqrt() + (cols as f64).sqrt()));
    det.lambda = Some(lambda);
    let reg = RegularizerSpec::Nuclear { lambda, rows, cols };
    let loss = LossSpec::Quadratic { design, y };
    let sol = solve_regularized(&loss, &reg, &opts)?;
    let frame = reg.certificate_frame(&beta, cfg.eta)?;
    let split = TargetSplit::at(&loss, &frame, &beta)?;
    rec.rel_err_l2 = finite(rel_err(&sol.beta, &beta));
    rec.b_norm_err = finite(frame.b_norm(&sub(&sol.beta, &beta))?);
    let tc = check_irrepresentable(&loss, &frame, &split)?;
    rec.cert_pass = Some(tc.pass);
    rec.cert_margin = finite(tc.margin);
    det.tangent_pass = Some(tc.pass);
    let to = oracle_bound_tangent_quadratic(&loss, &frame, &split)?;
    det.oracle_bound = finite(to.bound);
    let lhs = loss.bregman_divergence(&sol.beta, &beta)? + (1.0 - cfg.eta) * frame.b_norm(&sol.beta)?;
    if tc.pass {
        rec.slack_oracle = finite(to.bound - lhs);
    }
    rec.status = if tc.pass { "ok".into() } else { "no_guarantee".into() };
    Ok((rec, det))
}

/// Nuclear-norm completion of a planted low-rank matrix from uniform entries.
pub fn run_matcomp_demo(cfg: &ExperimentConfig) -> Result<MatcompOutcome> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::MatcompDemo {
        return Err(cfg_err("kind", "expected `matcomp_demo`"));
    }
    let (records, details) = run_trials(cfg, |i, seed, _n, rng| matcomp_trial(cfg, i, seed, rng)).into_iter().unzip();
    Ok(MatcompOutcome { records, details })
}

// ---------------------------------------------------------------------------
// Single problems

fn default_budget() -> usize {
    2000
}
fn default_width_trials() -> usize {
    2000
}

/// One fixed problem for the `solve`, `certify`, `width` and `glm-bound` commands.
///
/// `anchor` is the certificate anchor `β̄` and `beta_star` the target `β*`;
/// each defaults to the other, and to zero when both are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub loss: LossSpec,
    pub regularizer: RegularizerSpec,
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_star: Option<Vec<f64>>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Norm for the GLM `λ(β̄, β*)` term; `l2` when absent.
    #[serde(default)]
    pub norm: Option<NormDescriptor>,
    /// Solve `min R(β)` s.t. `Xβ = y` instead of the penalized problem.
    #[serde(default)]
    pub basis_pursuit: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_width_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: Option<SolveOptions>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        self.loss.validate().map_err(|e| cfg_err("loss", e))?;
        self.regularizer.validate().map_err(|e| cfg_err("regularizer", e))?;
        let p = self.loss.dim();
        if let Some(d) = self.regularizer.expected_dim() {
            if d != p {
                return Err(cfg_err("regularizer", format!("acts on dimension {d}, loss has {p}")));
            }
        }
        for (name, v) in [("anchor", &self.anchor), ("beta_star", &self.beta_star)] {
            if let Some(v) = v {
                if v.len() != p {
                    return Err(cfg_err(name, format!("length {} does not match dimension {p}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(cfg_err(name, "entries must be finite"));
                }
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(cfg_err("eta", "must lie in (0, 1]"));
        }
        if self.basis_pursuit && !self.loss.is_quadratic() {
            return Err(cfg_err("basis_pursuit", "needs a quadratic loss"));
        }
        if self.trials == 0 {
            return Err(cfg_err("trials", "must be positive"));
        }
        Ok(())
    }

    pub fn anchor(&self) -> Vec<f64> {
        self.anchor.clone().or_else(|| self.beta_star.clone()).unwrap_or_else(|| vec![0.0; self.loss.dim()])
    }

    pub fn beta_star(&self) -> Vec<f64> {
        self.beta_star.clone().unwrap_or_else(|| self.anchor())
    }

    pub fn solve_options(&self) -> SolveOptions {
        self.options.clone().unwrap_or_default()
    }
}

fn to_json_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(json_err)
}

/// Penalized estimator, or basis pursuit when requested.
pub fn run_solve(cfg: &ProblemConfig) -> Result<serde_json::Value> {
    let opts = cfg.solve_options();
    let sol = match (&cfg.loss, cfg.basis_pursuit) {
        (LossSpec::Quadratic { design, y }, true) => solve_basis_pursuit(design, y, &cfg.regularizer, &opts)?,
        _ => solve_regularized(&cfg.loss, &cfg.regularizer, &opts)?,
    };
    to_json_value(&sol)
}

/// Every certificate that applies at the anchor.
pub fn run_certify(cfg: &ProblemConfig) -> Result<serde_json::Value> {
    let opts = cfg.solve_options();
    let anchor = cfg.anchor();
    let frame = cfg.regularizer.certificate_frame(&anchor, cfg.eta)?;
    let split = TargetSplit::at(&cfg.loss, &frame, &cfg.beta_star())?;
    let (_, global) = global_certificate(&EffectiveLoss::plain(&cfg.loss), &frame, &opts)?;
    let mut out = serde_json::json!({
        "eta": cfg.eta,
        "eta_tilde": finite(split.eta_tilde),
        "support_size": frame.support_size(),
        "global": global,
    });
    if cfg.loss.is_quadratic() {
        out["tangent"] = match check_irrepresentable(&cfg.loss, &frame, &split) {
            Ok(r) => to_json_value(&r)?,
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        };
        if let Some(design) = cfg.loss.design() {
            out["interior"] = match build_interior_noisefree(design, &frame) {
                Ok(r) => to_json_value(&r)?,
                Err(e) => serde_json::json!({ "error": e.to_string() }),
            };
        }
    }
    Ok(out)
}

/// Monte Carlo width at the anchor frame, next to `λ_p`.
pub fn run_width(cfg: &ProblemConfig) -> Result<serde_json::Value> {
    let frame = cfg.regularizer.certificate_frame(&cfg.anchor(), cfg.eta)?;
    let split = TargetSplit::at(&cfg.loss, &frame, &cfg.beta_star())?;
    let est = width_mc(&frame, &split, cfg.trials, cfg.seed)?;
    Ok(serde_json::json!({
        "width": est,
        "lambda_p": lambda_n(cfg.loss.dim()),
        "eta_tilde": finite(split.eta_tilde),
    }))
}

/// GLM oracle bound, evaluated against the penalized estimate.
pub fn run_glm_bound(cfg: &ProblemConfig) -> Result<serde_json::Value> {
    let anchor = cfg.anchor();
    let beta_star = cfg.beta_star();
    let norm = cfg.norm.clone().unwrap_or(NormDescriptor::L2);
    let bound = glm_oracle_bound(&cfg.loss, &anchor, &beta_star, &cfg.regularizer, &norm, cfg.budget, cfg.seed)?;
    let sol = solve_regularized(&cfg.loss, &cfg.regularizer, &cfg.solve_options())?;
    let slack = bound.slack(&cfg.loss, &sol.beta, &beta_star)?;
    Ok(serde_json::json!({
        "bound": bound,
        "beta_hat": sol.beta,
        "divergence": cfg.loss.bregman_divergence(&sol.beta, &beta_star)?,
        "slack": finite(slack),
        "estimate_within_radius": bound.estimate_within_radius(&anchor, &sol.beta),
    }))
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Any experiment's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentOutcome {
    Phase(PhaseOutcome),
    OracleAudit(AuditOutcome),
    MixedDemo(MixedOutcome),
    MatcompDemo(MatcompOutcome),
}

impl ExperimentOutcome {
    pub fn records(&self) -> &[TrialRecord] {
        match self {
            ExperimentOutcome::Phase(o) => &o.records,
            ExperimentOutcome::OracleAudit(o) => &o.records,
            ExperimentOutcome::MixedDemo(o) => &o.records,
            ExperimentOutcome::MatcompDemo(o) => &o.records,
        }
    }

    fn details_json(&self) -> Option<serde_json::Value> {
        match self {
            ExperimentOutcome::Phase(_) => None,
            ExperimentOutcome::OracleAudit(o) => serde_json::to_value(&o.details).ok(),
            ExperimentOutcome::MixedDemo(o) => serde_json::to_value(&o.details).ok(),
            ExperimentOutcome::MatcompDemo(o) => serde_json::to_value(&o.details).ok(),
        }
    }

    fn summary_json(&self) -> serde_json::Value {
        let recs = self.records();
        let mut s = serde_json::json!({
            "trials": recs.len(),
            "errors": recs.iter().filter(|r| r.is_error()).count(),
        });
        match self {
            ExperimentOutcome::Phase(o) => {
                s["predicted_n"] = serde_json::json!(o.predicted_n);
                s["crossing_n"] = serde_json::json!(o.crossing_n);
            }
            ExperimentOutcome::OracleAudit(o) => s["min_slack"] = serde_json::json!(o.min_slack),
            ExperimentOutcome::MixedDemo(o) => {
                s["rule_violations"] = serde_json::json!(o.details.iter().filter(|d| !d.rule_holds).count())
            }
            ExperimentOutcome::MatcompDemo(_) => {
                s["min_slack_oracle"] = serde_json::json!(recs.iter().filter_map(|r| r.slack_oracle).reduce(f64::min))
            }
        }
        s
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    Ok(match cfg.kind {
        ExperimentKind::Phase => ExperimentOutcome::Phase(run_phase_transition(cfg)?),
        ExperimentKind::OracleAudit => ExperimentOutcome::OracleAudit(run_oracle_audit(cfg)?),
        ExperimentKind::MixedDemo => ExperimentOutcome::MixedDemo(run_mixed_demo(cfg)?),
        ExperimentKind::MatcompDemo => ExperimentOutcome::MatcompDemo(run_matcomp_demo(cfg)?),
    })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Trial table in the fixed column order.
pub fn records_csv(records: &[TrialRecord]) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Ok(b"trial,seed,n,p,status,rel_err_l2,b_norm_err,cert_pass,cert_margin,slack_thm1,slack_oracle,wall_ms\n".to_vec());
    }
    csv_bytes(records)
}

pub fn phase_rows_csv(rows: &[PhaseRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

/// Writes `<stem>.csv` or `<stem>.json`, plus `<stem>.meta.json` and, where
/// present, `<stem>.summary.csv` and `<stem>.details.json`. Returns the paths written.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = cfg.stem();
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    match format {
        OutputFormat::Csv => {
            put(format!("{stem}.csv"), records_csv(outcome.records())?)?;
            if let ExperimentOutcome::Phase(o) = outcome {
                put(format!("{stem}.summary.csv"), phase_rows_csv(&o.rows)?)?;
            }
            if let Some(d) = outcome.details_json() {
                put(format!("{stem}.details.json"), pretty(&d))?;
            }
        }
        OutputFormat::Json => put(format!("{stem}.json"), pretty(&serde_json::to_value(outcome).map_err(json_err)?))?,
    }
    let meta = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config": cfg,
        "summary": outcome.summary_json(),
        "columns": ["trial", "seed", "n", "p", "status", "rel_err_l2", "b_norm_err", "cert_pass", "cert_margin", "slack_thm1", "slack_oracle", "wall_ms"],
        "version": env!("CARGO_PKG_VERSION"),
    });
    put(format!("{stem}.meta.json"), pretty(&meta))?;
    Ok(written)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s.into_bytes()
}

/// Worker count from `CERTLAB_THREADS` (unset or `0`: one per core).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{THREADS_ENV} must be a nonnegative integer, got {v:?}"))),
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase_cfg() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"schema_version":1,"kind":"phase","regularizer":"lasso","n_grid":[6,40],"p":40,"support":3,"sigma":0.0,"trials":4,"seed":9}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_roundtrip() {
        let cfg = phase_cfg();
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.c1, 4.0);
        assert_eq!(cfg.output.dir, "results");
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_field_is_named() {
        let err = ExperimentConfig::from_json(r#"{"schema_version":1,"kind":"phase","regularizer":"lasso","n_grid":[4],"support":1,"sigma":0,"trials":1,"seed":1}"#)
            .unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("`p`")), "{err}");
        let err = ExperimentConfig::from_json(r#"{"schema_version":2,"kind":"phase","regularizer":"lasso","n_grid":[4],"p":4,"support":1,"sigma":0,"trials":1,"seed":1}"#)
            .unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("schema_version")));
    }

    #[test]
    fn phase_extremes() {
        let out = run_phase_transition(&phase_cfg()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].rate <= 0.25, "{:?}", out.rows[0]);
        assert_eq!(out.rows[1].rate, 1.0);
        assert!(out.records.iter().all(|r| !r.is_error()));
    }

    #[test]
    fn crossing_interpolates() {
        let row = |n, rate| PhaseRow { n, trials: 10, successes: 0, rate, predicted_n: None, failure_bound: None, width_bound: None };
        let rows = vec![row(10, 0.0), row(20, 0.25), row(30, 0.75)];
        assert_eq!(crossing_n(&rows), Some(25.0));
        assert_eq!(crossing_n(&rows[..2]), None);
    }

    #[test]
    fn tables_do_not_depend_on_thread_count() {
        let cfg = phase_cfg();
        let one = thread_pool(1).unwrap().install(|| run_phase_transition(&cfg)).unwrap();
        let four = thread_pool(4).unwrap().install(|| run_phase_transition(&cfg)).unwrap();
        assert_eq!(records_csv(&one.records).unwrap(), records_csv(&four.records).unwrap());
    }

    #[test]
    fn csv_header_is_fixed() {
        let bytes = records_csv(&[TrialRecord::new(0, 1, 2, 3)]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(
            "trial,seed,n,p,status,rel_err_l2,b_norm_err,cert_pass,cert_margin,slack_thm1,slack_oracle,wall_ms\n"
        ));
    }
}
