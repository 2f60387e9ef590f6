//! Configuration-driven experiment runner behind the `relocsplit` binary.
//!
//! An experiment is one flat TOML file:
//!
//! ```toml
//! algorithm = "dr"                       # dr | mt | scalar_counterexample
//! problem_kind = "affine_strongly_monotone"
//! dim = 10
//! seed = 7
//! mu_target = 1.0
//! l_target = 4.0
//! schedule_kind = "geometric"            # constant | geometric | polynomial
//! gamma_star = 1.0
//! schedule_c = 1.0
//! schedule_r = 0.5
//! n_steps = 300
//! checks = ["rate_theorem", "one_step"]
//! trace_path = "out/trace.csv"
//! report_path = "out/report.toml"
//! ```
//!
//! Every key has a default except `algorithm`; see [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    annotate_distances, estimate_limit, fit_linear_rate, verify_error_bound, verify_one_step_contraction,
    verify_rate_theorem, verify_relocator_laws, FixedPointCache, RateEstimate, SampleBox,
};
use crate::dr::{algorithm1_run, dr_summability_bound, fix_decomposition_check, DrFamily};
use crate::family::{
    gamma_lipschitz_probe, relocated_iterate, summability_report, GammaInterval, IterateTrace, ScalarShiftFamily,
    ScheduleKind,
};
use crate::mt::{algorithm2_run, consensus_gaps, mt_summability_bound, BlockVector, MtFamily, DEFAULT_THETA};
use crate::operators::Operator;
use crate::sampling::{gaussian_vector, random_orthogonal, seeded};
use crate::{Error, Matrix, OperatorFamily, Result, StepsizeSchedule, Vector};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "RELOCSPLIT_SEED";

/// Tolerance for relocator-law and decomposition residuals.
pub const LAW_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dr,
    Mt,
    ScalarCounterexample,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Symmetric positive definite operators with spectrum in `[μ, L]`.
    #[default]
    AffineStronglyMonotone,
    /// Skew operators of norm `L`, followed by one strongly monotone operator.
    AffineSkewPlusStrong,
    /// Strongly monotone operators followed by a box normal cone.
    AffinePlusBox,
    /// Operators given by `matrices` and `offsets`.
    CustomMatrices,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Constant,
    #[default]
    Geometric,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ErrorBound,
    OneStep,
    RateTheorem,
    RelocatorBijection,
    FixDecomposition,
    Summability,
    GammaLipschitz,
    Consensus,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::ErrorBound,
        Check::OneStep,
        Check::RateTheorem,
        Check::RelocatorBijection,
        Check::FixDecomposition,
        Check::Summability,
        Check::GammaLipschitz,
        Check::Consensus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::ErrorBound => "error_bound",
            Check::OneStep => "one_step",
            Check::RateTheorem => "rate_theorem",
            Check::RelocatorBijection => "relocator_bijection",
            Check::FixDecomposition => "fix_decomposition",
            Check::Summability => "summability",
            Check::GammaLipschitz => "gamma_lipschitz",
            Check::Consensus => "consensus",
        }
    }

    fn needs_singleton_fix(self) -> bool {
        matches!(self, Check::ErrorBound | Check::OneStep | Check::RateTheorem)
    }
}

fn default_dim() -> usize {
    10
}
fn default_mu() -> f64 {
    1.0
}
fn default_l() -> f64 {
    2.0
}
fn default_box_lower() -> f64 {
    -1.0
}
fn default_box_upper() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_r() -> f64 {
    0.5
}
fn default_p() -> f64 {
    2.0
}
fn default_gamma_low() -> f64 {
    0.5
}
fn default_gamma_high() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    0.5
}
fn default_steps() -> usize {
    300
}
fn default_samples() -> usize {
    1000
}
fn default_law_samples() -> usize {
    100
}
fn default_summability_terms() -> usize {
    100_000
}
fn default_x0_scale() -> f64 {
    5.0
}

/// One experiment. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in reports; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub problem_kind: ProblemKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Number of operators, `mt` only (default 3).
    #[serde(default)]
    pub n_ops: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mu")]
    pub mu_target: f64,
    #[serde(default = "default_l")]
    pub l_target: f64,
    #[serde(default = "default_box_lower")]
    pub box_lower: f64,
    #[serde(default = "default_box_upper")]
    pub box_upper: f64,
    #[serde(default)]
    pub schedule_kind: ScheduleName,
    #[serde(default = "default_one")]
    pub gamma_star: f64,
    #[serde(default = "default_one")]
    pub schedule_c: f64,
    #[serde(default = "default_r")]
    pub schedule_r: f64,
    #[serde(default = "default_p")]
    pub schedule_p: f64,
    #[serde(default = "default_gamma_low")]
    pub gamma_low: f64,
    #[serde(default = "default_gamma_high")]
    pub gamma_high: f64,
    /// Relaxation, `mt` only.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Contraction factor of the scalar counterexample.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub checks: Vec<Check>,
    /// Points sampled by `error_bound`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Stepsize triples sampled by `relocator_bijection`.
    #[serde(default = "default_law_samples")]
    pub law_samples: usize,
    #[serde(default = "default_summability_terms")]
    pub summability_terms: usize,
    /// Standard deviation of the seeded Gaussian starting point.
    #[serde(default = "default_x0_scale")]
    pub x0_scale: f64,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    /// Row-major matrices for `custom_matrices`.
    #[serde(default)]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub offsets: Option<Vec<Vec<f64>>>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl ExperimentConfig {
    /// Parses a config with `key=value` overrides applied on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err(e.message()))?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{item}` is not of the form key=value")))?;
            table.insert(key.trim().to_string(), parse_override_value(value.trim()));
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| config_err(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, applies overrides and the seed environment variable.
    /// Relative output paths are taken relative to the config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed.trim().parse().map_err(|_| config_err(format!("{SEED_ENV}={seed} is not an integer")))?;
        }
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.trace_path, &mut cfg.report_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".into())
    }

    pub fn gamma_interval(&self) -> Result<GammaInterval> {
        GammaInterval::new(self.gamma_low, self.gamma_high)
    }

    pub fn schedule(&self) -> Result<StepsizeSchedule> {
        let kind = match self.schedule_kind {
            ScheduleName::Constant => ScheduleKind::Constant,
            ScheduleName::Geometric => ScheduleKind::Geometric { c: self.schedule_c, r: self.schedule_r },
            ScheduleName::Polynomial => ScheduleKind::Polynomial { c: self.schedule_c, p: self.schedule_p },
        };
        StepsizeSchedule::new(kind, self.gamma_star, self.gamma_interval()?)
    }

    /// `N` for `mt`; 2 for `dr`; 1 for the scalar family.
    pub fn operator_count(&self) -> usize {
        match self.algorithm {
            Algorithm::Dr => 2,
            Algorithm::Mt => self.n_ops.unwrap_or(3),
            Algorithm::ScalarCounterexample => 1,
        }
    }

    /// Rejects contradictory settings and checks that do not apply.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => config_err(other.to_string()),
        };
        self.schedule().map_err(wrap)?;
        if self.algorithm != Algorithm::Mt {
            if self.n_ops.is_some() {
                return Err(config_err("n_ops only applies to algorithm = \"mt\""));
            }
            if self.theta.is_some() {
                return Err(config_err("theta only applies to algorithm = \"mt\""));
            }
        }
        if self.algorithm == Algorithm::Mt && self.operator_count() < 2 {
            return Err(config_err("mt needs n_ops >= 2"));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t < 1.0) {
                return Err(config_err(format!("theta must lie in (0,1), got {t}")));
            }
        }
        if self.algorithm == Algorithm::ScalarCounterexample {
            if !(self.beta >= 0.0 && self.beta < 1.0) {
                return Err(config_err(format!("beta must lie in [0,1), got {}", self.beta)));
            }
        } else {
            if self.dim == 0 || self.dim > 50 {
                return Err(config_err(format!("dim must lie in 1..=50, got {}", self.dim)));
            }
            if !(self.mu_target > 0.0 && self.mu_target <= self.l_target && self.l_target.is_finite()) {
                return Err(config_err(format!(
                    "need 0 < mu_target <= l_target, got mu_target = {}, l_target = {}",
                    self.mu_target, self.l_target
                )));
            }
            if self.problem_kind == ProblemKind::AffinePlusBox && !(self.box_lower.is_finite() && self.box_upper.is_finite() && self.box_lower <= self.box_upper) {
                return Err(config_err("box_lower exceeds box_upper"));
            }
            if self.problem_kind == ProblemKind::CustomMatrices && self.matrices.is_none() {
                return Err(config_err("custom_matrices needs `matrices`"));
            }
        }
        if self.problem_kind != ProblemKind::CustomMatrices && (self.matrices.is_some() || self.offsets.is_some()) {
            return Err(config_err("matrices and offsets only apply to problem_kind = \"custom_matrices\""));
        }
        if self.n_steps < 1 {
            return Err(config_err("n_steps must be at least 1"));
        }
        for &check in &self.checks {
            match (check, self.algorithm) {
                (Check::FixDecomposition, Algorithm::Dr) => {
                    if self.problem_kind == ProblemKind::AffineSkewPlusStrong {
                        return Err(config_err("fix_decomposition needs symmetric operators"));
                    }
                }
                (Check::FixDecomposition, _) => return Err(config_err("fix_decomposition only applies to dr")),
                (Check::Consensus, Algorithm::ScalarCounterexample) => {
                    return Err(config_err("consensus does not apply to the scalar counterexample"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `Q diag(λ) Qᵀ` with `λ` evenly spaced in `[μ, L]`; exactly `μI` when `μ = L`.
pub fn symmetric_with_spectrum<R: rand::Rng>(rng: &mut R, dim: usize, mu: f64, l: f64) -> Matrix {
    let q = random_orthogonal(rng, dim);
    if mu == l {
        return Matrix::identity(dim, dim) * mu;
    }
    let d = Matrix::from_diagonal(&Vector::from_vec(linspace(mu, l, dim)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Skew matrix with operator norm `l` (zero when `dim = 1`).
pub fn skew_with_norm<R: rand::Rng>(rng: &mut R, dim: usize, l: f64) -> Matrix {
    let q = random_orthogonal(rng, dim);
    let mut b = Matrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        b[(2 * k, 2 * k + 1)] = l;
        b[(2 * k + 1, 2 * k)] = -l;
    }
    let s = &q * b * q.transpose();
    (&s - s.transpose()) * 0.5
}

/// Builds the operators of a `dr` or `mt` experiment, deterministically from the seed.
pub fn generate_problem(cfg: &ExperimentConfig) -> Result<Vec<Operator>> {
    let n = cfg.operator_count();
    let d = cfg.dim;
    let mut rng = seeded(cfg.seed);
    let strong = |rng: &mut rand_chacha::ChaCha8Rng| {
        let m = symmetric_with_spectrum(rng, d, cfg.mu_target, cfg.l_target);
        let b = gaussian_vector(rng, d);
        Operator::affine(m, b)
    };
    match cfg.problem_kind {
        ProblemKind::AffineStronglyMonotone => (0..n).map(|_| strong(&mut rng)).collect(),
        ProblemKind::AffineSkewPlusStrong => {
            let mut ops = Vec::with_capacity(n);
            for _ in 0..n - 1 {
                let s = skew_with_norm(&mut rng, d, cfg.l_target);
                ops.push(Operator::affine(s, gaussian_vector(&mut rng, d))?);
            }
            ops.push(strong(&mut rng)?);
            Ok(ops)
        }
        ProblemKind::AffinePlusBox => {
            let mut ops = (0..n - 1).map(|_| strong(&mut rng)).collect::<Result<Vec<_>>>()?;
            ops.push(Operator::normal_cone(Vector::repeat(d, cfg.box_lower), Vector::repeat(d, cfg.box_upper))?);
            Ok(ops)
        }
        ProblemKind::CustomMatrices => {
            let mats = cfg.matrices.as_ref().ok_or_else(|| config_err("custom_matrices needs `matrices`"))?;
            if mats.len() != n {
                return Err(config_err(format!("expected {n} matrices, got {}", mats.len())));
            }
            if let Some(offsets) = &cfg.offsets {
                if offsets.len() != n {
                    return Err(config_err(format!("expected {n} offsets, got {}", offsets.len())));
                }
            }
            mats.iter()
                .enumerate()
                .map(|(i, rows)| {
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(config_err(format!("matrix {i} is not {d}x{d}")));
                    }
                    let m = Matrix::from_row_iterator(d, d, rows.iter().flatten().copied());
                    let b = match &cfg.offsets {
                        Some(o) if o[i].len() != d => return Err(config_err(format!("offset {i} has wrong length"))),
                        Some(o) => Vector::from_vec(o[i].clone()),
                        None => Vector::zeros(d),
                    };
                    Operator::affine(m, b).map_err(|e| config_err(format!("matrix {i}: {e}")))
                })
                .collect()
        }
    }
}

/// PASS or FAIL.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
        })
    }
}

/// One check outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRecord {
    fn new(check: Check, ok: bool) -> Self {
        Self {
            name: check.name().into(),
            status: Status::from_bool(ok),
            certified_constant: None,
            worst_ratio: None,
            fitted_c: None,
            fitted_r: None,
            fit_quality: None,
            marker: None,
            detail: None,
        }
    }

    fn with_fit(mut self, fit: &RateEstimate) -> Self {
        self.fitted_c = Some(fit.c);
        self.fitted_r = Some(fit.r);
        self.fit_quality = Some(fit.fit_quality);
        self.marker = Some(fit.label().into());
        self
    }

    fn detail(mut self, text: impl Into<String>) -> Self {
        self.detail = Some(text.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<20} {}", self.name, self.status)?;
        let fields = [
            ("certified", self.certified_constant),
            ("worst_ratio", self.worst_ratio),
            ("C", self.fitted_c),
            ("r", self.fitted_r),
            ("fit_quality", self.fit_quality),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                write!(f, " {k}={v:.6}")?;
            }
        }
        if let Some(m) = &self.marker {
            write!(f, " [{m}]")?;
        }
        if let Some(d) = &self.detail {
            write!(f, " {d}")?;
        }
        Ok(())
    }
}

/// All check outcomes of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub algorithm: Algorithm,
    #[serde(default, rename = "check")]
    pub checks: Vec<CheckRecord>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.message()))
    }

    pub fn exit_code(&self) -> u8 {
        if self.all_pass() {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.experiment)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Maps a process-level error onto the exit-status convention.
pub fn error_exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// The family an experiment runs on.
pub enum Instance {
    Dr(DrFamily),
    Mt(MtFamily),
    Scalar(ScalarShiftFamily),
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let interval = cfg.gamma_interval()?;
        Ok(match cfg.algorithm {
            Algorithm::ScalarCounterexample => Instance::Scalar(ScalarShiftFamily::new(cfg.beta, interval)?),
            Algorithm::Dr => {
                let mut ops = generate_problem(cfg)?.into_iter();
                let (a1, a2) = (ops.next().expect("two operators"), ops.next().expect("two operators"));
                Instance::Dr(DrFamily::new(a1, a2, interval)?)
            }
            Algorithm::Mt => {
                Instance::Mt(MtFamily::new(generate_problem(cfg)?, cfg.theta.unwrap_or(DEFAULT_THETA), interval)?)
            }
        })
    }

    pub fn family(&self) -> &dyn OperatorFamily {
        match self {
            Instance::Dr(f) => f,
            Instance::Mt(f) => f,
            Instance::Scalar(f) => f,
        }
    }

    /// Seeded Gaussian start, or `γ₀` for the scalar family.
    pub fn start(&self, cfg: &ExperimentConfig, schedule: &StepsizeSchedule) -> Vector {
        match self {
            Instance::Scalar(_) => Vector::from_element(1, schedule.gamma(0)),
            _ => gaussian_vector(&mut seeded(cfg.seed ^ 0x5eed_5eed), self.family().dim()) * cfg.x0_scale,
        }
    }

    /// The recorded trace: the algorithmic form for `dr`/`mt`, annotated with
    /// distances (singleton fixed points only) and errors to the limit.
    pub fn trace(&self, schedule: &StepsizeSchedule, x0: &Vector, n_steps: usize, cache: &mut FixedPointCache) -> Result<IterateTrace> {
        let family = self.family();
        let mut trace = match self {
            Instance::Dr(f) => algorithm1_run(f, schedule, x0, n_steps)?,
            Instance::Mt(f) => {
                let x0 = BlockVector::new(f.n_ops() - 1, f.block_dim(), x0.clone())?;
                algorithm2_run(f, schedule, &x0, n_steps)?
            }
            Instance::Scalar(f) => relocated_iterate(f, schedule, x0, n_steps)?,
        };
        trace.set_limit(&estimate_limit(family, schedule, x0, n_steps)?);
        if family.regularity().singleton_fix() {
            annotate_distances(family, &mut trace, cache)?;
        }
        Ok(trace)
    }

    /// Certified `κ`: the smaller of `1/(1−β)` and, for `dr`, `max_Γ κ_γ`.
    fn kappa(&self) -> Option<f64> {
        let from_contraction = self.family().regularity().contraction_error_bound();
        let from_dr = match self {
            Instance::Dr(f) => f.uniform_regularity_constant(),
            _ => None,
        };
        match (from_contraction, from_dr) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Result of [`run_experiment`].
pub struct Outcome {
    pub report: Report,
    pub trace: IterateTrace,
}

/// Builds the problem, runs the algorithm and evaluates every requested check.
///
/// Check failures are recorded in the report; only setup problems are errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let instance = Instance::build(cfg).map_err(|e| match e {
        Error::Config(_) => e,
        other => config_err(other.to_string()),
    })?;
    let family = instance.family();
    for &check in &cfg.checks {
        if check.needs_singleton_fix() && !family.regularity().singleton_fix() {
            return Err(config_err(format!("{} needs a contraction certificate, which this problem lacks", check.name())));
        }
        if check == Check::FixDecomposition {
            if let Instance::Dr(f) = &instance {
                if !(f.a1().is_paramonotone() && f.a2().is_paramonotone()) {
                    return Err(config_err("fix_decomposition needs symmetric operators"));
                }
            }
        }
    }
    let schedule = cfg.schedule()?;
    let x0 = instance.start(cfg, &schedule);
    let mut cache = FixedPointCache::new();
    let trace = instance.trace(&schedule, &x0, cfg.n_steps, &mut cache)?;

    let mut checks = Vec::with_capacity(cfg.checks.len());
    let mut seen = Vec::new();
    for &check in &cfg.checks {
        if seen.contains(&check) {
            continue;
        }
        seen.push(check);
        let record = match run_check(check, cfg, &instance, &schedule, &x0, &trace, &mut cache) {
            Ok(r) => r,
            Err(e @ Error::Io(_)) => return Err(e),
            Err(e) => CheckRecord::new(check, false).detail(format!("error: {e}")),
        };
        checks.push(record);
    }
    Ok(Outcome { report: Report { experiment: cfg.label(), algorithm: cfg.algorithm, checks }, trace })
}

fn run_check(
    check: Check,
    cfg: &ExperimentConfig,
    instance: &Instance,
    schedule: &StepsizeSchedule,
    x0: &Vector,
    trace: &IterateTrace,
    cache: &mut FixedPointCache,
) -> Result<CheckRecord> {
    let family = instance.family();
    let kappa = || instance.kappa().ok_or_else(|| config_err("no certified regularity constant"));
    match check {
        Check::ErrorBound => {
            let kappa = kappa()?;
            let centre = cache.get(family, schedule.gamma_star, x0)?;
            let sample_box = SampleBox::cube(&centre, cfg.x0_scale.max(1.0));
            let rep = verify_error_bound(family, schedule.gamma_star, kappa, &sample_box, cfg.samples, cfg.seed)?;
            let mut rec = CheckRecord::new(check, rep.pass());
            rec.certified_constant = Some(kappa);
            rec.worst_ratio = Some(rep.worst_ratio);
            Ok(rec.detail(format!("{} violations in {} samples", rep.violations, rep.samples)))
        }
        Check::OneStep => {
            let rep = verify_one_step_contraction(family, trace, kappa()?)?;
            let mut rec = CheckRecord::new(check, rep.pass());
            rec.certified_constant = Some(rep.certified_constant);
            rec.worst_ratio = Some(rep.worst_ratio);
            Ok(rec.detail(format!("{} violations in {} steps", rep.violations, rep.samples)))
        }
        Check::RateTheorem => {
            let rep = verify_rate_theorem(family, schedule, x0, cfg.n_steps, cache)?;
            Ok(CheckRecord::new(check, rep.pass).with_fit(&rep.iterate_rate).detail(format!(
                "dist_rate r={:.6} ({})",
                rep.dist_rate.r,
                rep.dist_rate.label()
            )))
        }
        Check::RelocatorBijection => {
            let rep = verify_relocator_laws(family, x0, cfg.law_samples, cfg.seed, cache)?;
            let mut rec = CheckRecord::new(check, rep.worst() <= LAW_TOL);
            rec.worst_ratio = Some(rep.worst());
            Ok(rec.detail(format!(
                "identity={:.2e} composition={:.2e} round_trip={:.2e} target={:.2e}",
                rep.identity, rep.composition, rep.round_trip, rep.target_residual
            )))
        }
        Check::FixDecomposition => {
            let Instance::Dr(f) = instance else {
                return Err(config_err("fix_decomposition only applies to dr"));
            };
            let interval = f.gamma_interval();
            let mut worst: f64 = 0.0;
            let mut points = Vec::new();
            for gamma in [interval.low, interval.high] {
                let x = cache.get(f, gamma, x0)?;
                let d = fix_decomposition_check(f, gamma, &x)?;
                worst = worst.max(d.primal_residual).max(d.dual_residual).max(d.reconstruction_error);
                // z + γg with the same (z, g) must be fixed for every γ.
                let other = if gamma == interval.low { interval.high } else { interval.low };
                let rebuilt = &d.z + &d.g * other;
                worst = worst.max(f.fixed_point_residual(other, &rebuilt)?);
                points.push((gamma, x));
            }
            let (g0, x0f) = &points[0];
            let (g1, x1f) = &points[1];
            let moved = (f.relocate(*g1, *g0, x0f)? - x1f).norm();
            worst = worst.max(moved);
            let mut rec = CheckRecord::new(check, worst <= LAW_TOL);
            rec.worst_ratio = Some(worst);
            Ok(rec.detail(format!("fixed points differ by {:.3e}", (x0f - x1f).norm())))
        }
        Check::Summability => {
            let rep = summability_report(family, schedule, cfg.summability_terms)?;
            let bound = match (instance, schedule.linear_envelope()) {
                (_, None) => None,
                (Instance::Dr(_), Some((c, r))) => Some(dr_summability_bound(c, r, cfg.gamma_low)),
                (Instance::Mt(f), Some((c, r))) => Some(mt_summability_bound(c, r, f.gamma_interval(), f.n_ops())),
                (Instance::Scalar(_), Some(_)) => Some(0.0),
            };
            let within = bound.is_none_or(|b| rep.total() <= b + 1e-12);
            let mut rec = CheckRecord::new(check, rep.converged && within);
            rec.certified_constant = bound;
            rec.worst_ratio = bound.filter(|b| *b > 0.0).map(|b| rep.total() / b);
            rec.marker = Some(if rep.converged { "converged" } else { "not converged" }.into());
            Ok(rec.detail(format!("sum={:.6e} over {} terms", rep.total(), rep.partial_sums.len())))
        }
        Check::GammaLipschitz => {
            let interval = family.gamma_interval();
            let grid = interval.grid(10);
            let points = grid.iter().map(|&g| Ok((cache.get(family, g, x0)?, g))).collect::<Result<Vec<_>>>()?;
            let probe = gamma_lipschitz_probe(family, &points, &grid)?;
            let mut ok = probe.l_estimate.is_finite();
            let mut worst = 0.0_f64;
            if let Instance::Dr(f) = instance {
                for (x, g) in &points {
                    let expected = (x - f.a1().resolvent(*g, x)?).norm() / g;
                    for &d in grid.iter().filter(|d| **d != *g) {
                        let ratio = (f.relocate(d, *g, x)? - x).norm() / (d - g).abs();
                        worst = worst.max((ratio - expected).abs() / (1.0 + expected));
                    }
                }
                ok &= worst <= 1e-9;
            }
            let mut rec = CheckRecord::new(check, ok);
            rec.certified_constant = Some(probe.l_estimate);
            if matches!(instance, Instance::Dr(_)) {
                rec.worst_ratio = Some(worst);
            }
            Ok(rec)
        }
        Check::Consensus => {
            let gaps: Vec<f64> = match instance {
                Instance::Mt(f) => consensus_gaps(trace, f.n_ops())?,
                Instance::Dr(_) => trace
                    .rows
                    .iter()
                    .map(|row| Ok((row.block("z")? - row.block("y")?).norm()))
                    .collect::<Result<_>>()?,
                Instance::Scalar(_) => return Err(config_err("consensus does not apply to the scalar counterexample")),
            };
            let fit = fit_linear_rate(&gaps, None)?;
            let ok = fit.is_r_linear() && fit.fit_quality >= crate::diagnostics::MIN_FIT_QUALITY;
            Ok(CheckRecord::new(check, ok).with_fit(&fit))
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        config_err(format!("csv: {e}"))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `n,gamma,residual,dist_to_fix,err_to_limit,x_0..,<block>_0..` with
/// 17 significant digits. Missing values are empty cells.
pub fn write_trace_csv<W: std::io::Write>(writer: W, trace: &IterateTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = trace.rows.first().map_or(0, |r| r.x.len());
    let blocks: Vec<(String, usize)> = trace
        .rows
        .first()
        .map(|r| r.blocks.iter().map(|(k, v)| (k.clone(), v.len())).collect())
        .unwrap_or_default();
    let mut header: Vec<String> =
        ["n", "gamma", "residual", "dist_to_fix", "err_to_limit"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|i| format!("x_{i}")));
    for (name, len) in &blocks {
        header.extend((0..*len).map(|i| format!("{name}_{i}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in &trace.rows {
        let mut rec = vec![
            row.n.to_string(),
            fmt_f64(row.gamma),
            fmt_f64(row.residual),
            fmt_opt(row.dist_to_fix),
            fmt_opt(row.err_to_limit),
        ];
        rec.extend(row.x.iter().map(|v| fmt_f64(*v)));
        for (name, _) in &blocks {
            rec.extend(row.block(name)?.iter().map(|v| fmt_f64(*v)));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(path: &Path, trace: &IterateTrace) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_trace_csv(fs::File::create(path)?, trace)
}

/// A trace CSV read back as named columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceTable {
    pub columns: BTreeMap<String, Vec<Option<f64>>>,
    pub order: Vec<String>,
}

impl TraceTable {
    pub fn read<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let order: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut columns: BTreeMap<String, Vec<Option<f64>>> = order.iter().map(|h| (h.clone(), Vec::new())).collect();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            for (h, cell) in order.iter().zip(rec.iter()) {
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| config_err(format!("column {h}: `{cell}` is not a number")))?)
                };
                columns.get_mut(h).expect("header").push(v);
            }
        }
        Ok(Self { columns, order })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }

    /// A column with every cell present.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.columns.get(name).ok_or_else(|| config_err(format!("no column `{name}`")))?;
        col.iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| config_err(format!("column `{name}` is empty at row {i}"))))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_report(path: &Path, report: &Report) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, report.to_toml()?)?;
    Ok(())
}

/// `run` (with trace) or `verify` (without) for one config file.
pub fn execute(path: &Path, overrides: &[String], write_trace: bool) -> Result<Report> {
    let cfg = ExperimentConfig::load(path, overrides)?;
    let outcome = run_experiment(&cfg)?;
    if write_trace {
        if let Some(p) = &cfg.trace_path {
            save_trace_csv(p, &outcome.trace)?;
        }
    }
    if let Some(p) = &cfg.report_path {
        write_report(p, &outcome.report)?;
    }
    Ok(outcome.report)
}

#[derive(Debug, Parser)]
#[command(name = "relocsplit", version, about = "Relocated Douglas-Rachford and Malitsky-Tam experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run experiments and write traces and reports.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Override a config key, e.g. `--set seed=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Number of configs run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the checks of one experiment without writing a trace.
    Verify {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Fit an R-linear rate to one column of a trace CSV.
    Rate {
        trace: PathBuf,
        #[arg(long, default_value = "err_to_limit")]
        column: String,
        #[arg(long)]
        burn_in: Option<usize>,
    },
}

fn report_to_text(result: &Result<Report>, path: &Path) -> (String, u8) {
    match result {
        Ok(report) => (report.to_string(), report.exit_code()),
        Err(e) => (format!("# {}\nerror: {e}\n", path.display()), error_exit_code(e)),
    }
}

/// Runs configs with up to `jobs` in flight; returns `(text, status)` in input order.
pub fn run_many(configs: &[PathBuf], overrides: &[String], jobs: usize) -> Vec<(String, u8)> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(jobs) {
        let results: Vec<(String, u8)> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| s.spawn(move || report_to_text(&execute(p, overrides, true), p)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect()
        });
        out.extend(results);
    }
    out
}

/// Executes a parsed command line and returns the process exit status.
pub fn dispatch(cli: Cli) -> u8 {
    match cli.command {
        Command::Run { configs, set, jobs } => {
            let mut status = EXIT_OK;
            for (text, code) in run_many(&configs, &set, jobs) {
                print!("{text}");
                status = status.max(code);
            }
            status
        }
        Command::Verify { config, set } => {
            let (text, code) = report_to_text(&execute(&config, &set, false), &config);
            print!("{text}");
            code
        }
        Command::Rate { trace, column, burn_in } => {
            let fit = TraceTable::load(&trace).and_then(|t| t.column(&column)).and_then(|e| fit_linear_rate(&e, burn_in));
            match fit {
                Ok(f) => {
                    println!(
                        "column={column} C={:.6e} r={:.6} fit_quality={:.6} burn_in={} n_used={} [{}]",
                        f.c,
                        f.r,
                        f.fit_quality,
                        f.burn_in,
                        f.n_used,
                        f.label()
                    );
                    if f.is_r_linear() {
                        EXIT_OK
                    } else {
                        EXIT_CHECK_FAILED
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    error_exit_code(&e)
                }
            }
        }
    }
}
