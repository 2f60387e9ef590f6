//! Stepsize-parameterized operator families, fixed-point relocators and the
//! relocated iteration `x_{n+1} = Q_{γ_{n+1}←γ_n} T_{γ_n} x_n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::operators::{check_dim, check_finite, check_gamma};
use crate::{Error, Result, Vector};

/// Default fixed-point membership tolerance, scaled by `1 + ‖x‖`.
pub const FIX_TOL: f64 = 1e-8;

/// Iterates with a larger norm abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Relative slack when checking that a stepsize lies in `Γ`.
const INTERVAL_SLACK: f64 = 1e-12;

/// Closed stepsize interval `Γ = [low, high] ⊂ (0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub low: f64,
    pub high: f64,
}

impl GammaInterval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        check_gamma(low)?;
        check_gamma(high)?;
        if low > high {
            return Err(Error::DomainError(format!("empty stepsize interval [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, gamma: f64) -> bool {
        gamma >= self.low * (1.0 - INTERVAL_SLACK) && gamma <= self.high * (1.0 + INTERVAL_SLACK)
    }

    pub fn clamp(&self, gamma: f64) -> f64 {
        gamma.clamp(self.low, self.high)
    }

    pub fn check(&self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        if self.contains(gamma) {
            Ok(())
        } else {
            Err(Error::DomainError(format!(
                "stepsize {gamma} outside [{}, {}]",
                self.low, self.high
            )))
        }
    }

    /// `n` equally spaced points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.low],
            _ => (0..n)
                .map(|i| self.low + (self.high - self.low) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Averagedness and contraction metadata of a family.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Regularity {
    /// Every `T_γ` is `α`-averaged.
    pub averagedness: Option<f64>,
    /// Every `T_γ` is a `β`-contraction.
    pub contraction: Option<f64>,
}

impl Regularity {
    pub fn averaged(alpha: f64) -> Self {
        Self { averagedness: Some(alpha), contraction: None }
    }

    pub fn contraction(beta: f64) -> Self {
        Self { averagedness: None, contraction: Some(beta) }
    }

    /// `α`, or `(β + 1)/2` for a `β`-contraction.
    pub fn effective_alpha(&self) -> Option<f64> {
        match (self.contraction, self.averagedness) {
            (Some(b), Some(a)) => Some(a.min((b + 1.0) / 2.0)),
            (Some(b), None) => Some((b + 1.0) / 2.0),
            (None, a) => a,
        }
    }

    /// `1/(1 − β)` when the family is contractive.
    pub fn contraction_error_bound(&self) -> Option<f64> {
        self.contraction.map(|b| 1.0 / (1.0 - b))
    }

    /// Contractions have a single fixed point, so distances are exact.
    pub fn singleton_fix(&self) -> bool {
        self.contraction.is_some()
    }
}

/// `(T_γ)_{γ∈Γ}` together with a fixed-point relocator `Q_{δ←γ}`.
pub trait OperatorFamily: Send + Sync {
    /// Length of the flat state vector.
    fn dim(&self) -> usize;

    fn gamma_interval(&self) -> GammaInterval;

    /// `T_γ x`.
    fn apply(&self, gamma: f64, x: &Vector) -> Result<Vector>;

    /// `Q_{δ←γ} x`.
    fn relocate(&self, delta: f64, gamma: f64, x: &Vector) -> Result<Vector>;

    /// A Lipschitz constant `L_{δ←γ} ≥ 1` of `Q_{δ←γ}`, equal to 1 at `δ = γ`.
    fn relocator_lipschitz(&self, delta: f64, gamma: f64) -> f64;

    fn regularity(&self) -> Regularity;

    /// `‖x − T_γ x‖`.
    fn fixed_point_residual(&self, gamma: f64, x: &Vector) -> Result<f64> {
        Ok((x - self.apply(gamma, x)?).norm())
    }

    /// Residual test with tolerance `tol·(1 + ‖x‖)`.
    fn is_fixed_point(&self, gamma: f64, x: &Vector, tol: f64) -> Result<bool> {
        Ok(self.fixed_point_residual(gamma, x)? <= tol * (1.0 + x.norm()))
    }
}

impl<F: OperatorFamily + ?Sized> OperatorFamily for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn gamma_interval(&self) -> GammaInterval {
        (**self).gamma_interval()
    }
    fn apply(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        (**self).apply(gamma, x)
    }
    fn relocate(&self, delta: f64, gamma: f64, x: &Vector) -> Result<Vector> {
        (**self).relocate(delta, gamma, x)
    }
    fn relocator_lipschitz(&self, delta: f64, gamma: f64) -> f64 {
        (**self).relocator_lipschitz(delta, gamma)
    }
    fn regularity(&self) -> Regularity {
        (**self).regularity()
    }
}

/// How `γ_n` approaches `γ*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `γ* + C·rⁿ`
    Geometric { c: f64, r: f64 },
    /// `γ* + C/(n + 1)^p`
    Polynomial { c: f64, p: f64 },
}

/// A stepsize sequence `γ_n → γ*`, clamped into `Γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    pub kind: ScheduleKind,
    pub gamma_star: f64,
    pub interval: GammaInterval,
}

impl StepsizeSchedule {
    pub fn new(kind: ScheduleKind, gamma_star: f64, interval: GammaInterval) -> Result<Self> {
        interval.check(gamma_star)?;
        match kind {
            ScheduleKind::Constant => {}
            ScheduleKind::Geometric { c, r } => {
                if !c.is_finite() || !(r > 0.0 && r < 1.0) {
                    return Err(Error::DomainError(format!("geometric schedule needs finite C and r in (0,1), got C={c}, r={r}")));
                }
            }
            ScheduleKind::Polynomial { c, p } => {
                if !c.is_finite() || !(p > 0.0 && p.is_finite()) {
                    return Err(Error::DomainError(format!("polynomial schedule needs finite C and p > 0, got C={c}, p={p}")));
                }
            }
        }
        Ok(Self { kind, gamma_star, interval })
    }

    pub fn constant(gamma: f64, interval: GammaInterval) -> Result<Self> {
        Self::new(ScheduleKind::Constant, gamma, interval)
    }

    pub fn geometric(gamma_star: f64, c: f64, r: f64, interval: GammaInterval) -> Result<Self> {
        Self::new(ScheduleKind::Geometric { c, r }, gamma_star, interval)
    }

    pub fn polynomial(gamma_star: f64, c: f64, p: f64, interval: GammaInterval) -> Result<Self> {
        Self::new(ScheduleKind::Polynomial { c, p }, gamma_star, interval)
    }

    /// `γ_n`.
    pub fn gamma(&self, n: usize) -> f64 {
        let raw = match self.kind {
            ScheduleKind::Constant => self.gamma_star,
            ScheduleKind::Geometric { c, r } => self.gamma_star + c * r.powi(n.min(i32::MAX as usize) as i32),
            ScheduleKind::Polynomial { c, p } => self.gamma_star + c / ((n + 1) as f64).powf(p),
        };
        self.interval.clamp(raw)
    }

    /// `γ_0, …, γ_{n−1}`.
    pub fn values(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.gamma(k)).collect()
    }

    /// `(|C|, r)` of the R-linear envelope `|γ_n − γ*| ≤ C rⁿ`, if any.
    pub fn linear_envelope(&self) -> Option<(f64, f64)> {
        match self.kind {
            ScheduleKind::Constant => Some((0.0, 0.0)),
            ScheduleKind::Geometric { c, r } => Some((c.abs(), r)),
            ScheduleKind::Polynomial { .. } => None,
        }
    }
}

/// One iteration of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub gamma: f64,
    pub x: Vector,
    /// `T_{γ_n} x_n`.
    pub t_of_x: Vector,
    /// `‖x_n − T_{γ_n} x_n‖`.
    pub residual: f64,
    pub dist_to_fix: Option<f64>,
    /// Set when `dist_to_fix` is only an upper bound through an oracle point.
    pub dist_is_upper_bound: bool,
    pub err_to_limit: Option<f64>,
    /// Algorithm-specific sequences, e.g. `z`, `y`, `w`.
    pub blocks: BTreeMap<String, Vector>,
}

impl TraceRow {
    pub fn new(n: usize, gamma: f64, x: Vector, t_of_x: Vector) -> Self {
        let residual = (&x - &t_of_x).norm();
        Self {
            n,
            gamma,
            x,
            t_of_x,
            residual,
            dist_to_fix: None,
            dist_is_upper_bound: false,
            err_to_limit: None,
            blocks: BTreeMap::new(),
        }
    }

    pub fn block(&self, name: &str) -> Result<&Vector> {
        self.blocks.get(name).ok_or_else(|| Error::MissingBlocks(name.to_owned()))
    }
}

/// Rows `0..=n_steps` of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterateTrace {
    pub rows: Vec<TraceRow>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn xs(&self) -> impl Iterator<Item = &Vector> {
        self.rows.iter().map(|r| &r.x)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gamma).collect()
    }

    pub fn distances(&self) -> Result<Vec<f64>> {
        self.rows.iter().map(|r| r.dist_to_fix.ok_or(Error::MissingDistances)).collect()
    }

    /// `‖x_n − limit‖`, written into each row.
    pub fn set_limit(&mut self, limit: &Vector) {
        for row in &mut self.rows {
            row.err_to_limit = Some((&row.x - limit).norm());
        }
    }

    pub fn errors_to_limit(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.err_to_limit).collect()
    }

    /// Names of the extra sequences, taken from the first row.
    pub fn block_names(&self) -> Vec<String> {
        self.rows.first().map(|r| r.blocks.keys().cloned().collect()).unwrap_or_default()
    }
}

pub(crate) fn guard(step: usize, x: &Vector) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::DivergenceDetected { step, norm });
    }
    Ok(())
}

pub(crate) fn check_schedule<F: OperatorFamily + ?Sized>(family: &F, schedule: &StepsizeSchedule, n_steps: usize) -> Result<()> {
    let interval = family.gamma_interval();
    interval.check(schedule.gamma(0))?;
    interval.check(schedule.gamma_star)?;
    if !(interval.contains(schedule.interval.low) && interval.contains(schedule.interval.high)) {
        // The clamp interval is wider than Γ, so check the values themselves.
        for n in 0..=n_steps {
            interval.check(schedule.gamma(n))?;
        }
    }
    Ok(())
}

/// Runs `x_{n+1} = Q_{γ_{n+1}←γ_n} T_{γ_n} x_n` and records rows `0..=n_steps`.
pub fn relocated_iterate<F: OperatorFamily + ?Sized>(
    family: &F,
    schedule: &StepsizeSchedule,
    x0: &Vector,
    n_steps: usize,
) -> Result<IterateTrace> {
    check_dim(family.dim(), x0.len())?;
    check_finite(x0)?;
    check_schedule(family, schedule, n_steps)?;
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    for n in 0..=n_steps {
        guard(n, &x)?;
        let gamma = schedule.gamma(n);
        let t = family.apply(gamma, &x)?;
        let next = if n < n_steps { Some(family.relocate(schedule.gamma(n + 1), gamma, &t)?) } else { None };
        rows.push(TraceRow::new(n, gamma, x, t));
        match next {
            Some(v) => x = v,
            None => break,
        }
    }
    Ok(IterateTrace { rows })
}

/// `c_{n+1} = Q_{γ_{n+1}←γ_n} c_n` starting from `c_0 ∈ Fix T_{γ_0}`.
pub fn relocator_only_sequence<F: OperatorFamily + ?Sized>(
    family: &F,
    schedule: &StepsizeSchedule,
    c0: &Vector,
    n_steps: usize,
) -> Result<IterateTrace> {
    check_dim(family.dim(), c0.len())?;
    check_schedule(family, schedule, n_steps)?;
    let gamma0 = schedule.gamma(0);
    let residual = family.fixed_point_residual(gamma0, c0)?;
    if residual > FIX_TOL * (1.0 + c0.norm()) {
        return Err(Error::NotAFixedPoint { gamma: gamma0, residual });
    }
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut c = c0.clone();
    for n in 0..=n_steps {
        guard(n, &c)?;
        let gamma = schedule.gamma(n);
        let t = family.apply(gamma, &c)?;
        let next = if n < n_steps { Some(family.relocate(schedule.gamma(n + 1), gamma, &c)?) } else { None };
        let mut row = TraceRow::new(n, gamma, c, t);
        row.dist_to_fix = family.regularity().singleton_fix().then_some(0.0);
        rows.push(row);
        match next {
            Some(v) => c = v,
            None => break,
        }
    }
    Ok(IterateTrace { rows })
}

/// Partial sums of `L_{γ_{n+1}←γ_n} − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummabilityReport {
    pub partial_sums: Vec<f64>,
    /// The last 10% of the terms add less than `1e-10`.
    pub converged: bool,
}

impl SummabilityReport {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

pub const SUMMABILITY_TAIL_TOL: f64 = 1e-10;

pub fn summability_report<F: OperatorFamily + ?Sized>(
    family: &F,
    schedule: &StepsizeSchedule,
    n_terms: usize,
) -> Result<SummabilityReport> {
    if n_terms < 10 {
        return Err(Error::TooFewSamples { got: n_terms, need: 10 });
    }
    let mut partial_sums = Vec::with_capacity(n_terms);
    let mut acc = 0.0;
    let mut gamma = schedule.gamma(0);
    for n in 0..n_terms {
        let next = schedule.gamma(n + 1);
        acc += family.relocator_lipschitz(next, gamma) - 1.0;
        partial_sums.push(acc);
        gamma = next;
    }
    let tail_start = n_terms - n_terms.div_ceil(10);
    let before = if tail_start == 0 { 0.0 } else { partial_sums[tail_start - 1] };
    let converged = (acc - before).abs() < SUMMABILITY_TAIL_TOL;
    Ok(SummabilityReport { partial_sums, converged })
}

/// Largest `‖Q_{δ←γ}x − x‖ / |δ − γ|` over fixed points and target stepsizes.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaLipschitzProbe {
    pub l_estimate: f64,
    /// `(x, γ, δ)` attaining the estimate.
    pub max_ratio_point: Option<(Vector, f64, f64)>,
}

pub fn gamma_lipschitz_probe<F: OperatorFamily + ?Sized>(
    family: &F,
    fixed_points: &[(Vector, f64)],
    deltas: &[f64],
) -> Result<GammaLipschitzProbe> {
    let interval = family.gamma_interval();
    let mut probe = GammaLipschitzProbe { l_estimate: 0.0, max_ratio_point: None };
    for (x, gamma) in fixed_points {
        let residual = family.fixed_point_residual(*gamma, x)?;
        if residual > FIX_TOL * (1.0 + x.norm()) {
            return Err(Error::NotAFixedPoint { gamma: *gamma, residual });
        }
        for &delta in deltas {
            interval.check(delta)?;
            if delta == *gamma {
                continue;
            }
            let ratio = (family.relocate(delta, *gamma, x)? - x).norm() / (delta - gamma).abs();
            if probe.max_ratio_point.is_none() || ratio > probe.l_estimate {
                probe.l_estimate = ratio;
                probe.max_ratio_point = Some((x.clone(), *gamma, delta));
            }
        }
    }
    Ok(probe)
}

/// `T_γ x = γ + β(x − γ)` on `ℝ`, relocated by the constant map `δ`.
///
/// Started at `x_0 = γ_0`, the relocated iteration reproduces the stepsizes,
/// so it converges R-linearly exactly when `(γ_n)` does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarShiftFamily {
    beta: f64,
    interval: GammaInterval,
}

impl ScalarShiftFamily {
    pub fn new(beta: f64, interval: GammaInterval) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::DomainError(format!("beta must lie in [0,1), got {beta}")));
        }
        Ok(Self { beta, interval })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl OperatorFamily for ScalarShiftFamily {
    fn dim(&self) -> usize {
        1
    }

    fn gamma_interval(&self) -> GammaInterval {
        self.interval
    }

    fn apply(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(gamma)?;
        check_dim(1, x.len())?;
        Ok(Vector::from_element(1, gamma + self.beta * (x[0] - gamma)))
    }

    fn relocate(&self, delta: f64, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(delta)?;
        check_gamma(gamma)?;
        check_dim(1, x.len())?;
        Ok(Vector::from_element(1, delta))
    }

    fn relocator_lipschitz(&self, delta: f64, gamma: f64) -> f64 {
        let _ = (delta, gamma);
        1.0
    }

    fn regularity(&self) -> Regularity {
        Regularity::contraction(self.beta)
    }
}
