//! Executable checks: R-linear rate fits, fixed-point oracles, error bounds
//! and the one-step distance inequality.

use std::collections::HashMap;

use rand::Rng;

use crate::family::{relocated_iterate, IterateTrace, OperatorFamily, StepsizeSchedule};
use crate::operators::check_dim;
use crate::sampling::{seeded, uniform_in_box};
use crate::{Error, Result, Vector};

/// Errors below this are rounding noise and end the fitted window.
pub const FLOOR: f64 = 1e-14;

/// Smallest number of samples a rate fit accepts.
pub const MIN_FIT_SAMPLES: usize = 20;

/// Fits below this coefficient of determination are not R-linear.
pub const MIN_FIT_QUALITY: f64 = 0.9;

/// Fits whose half-window slopes differ by more than this factor are not R-linear.
pub const MIN_SLOPE_RATIO: f64 = 0.5;

pub const ORACLE_TOL: f64 = 1e-13;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

/// Slack added to every bound check.
pub const BOUND_SLACK: f64 = 1e-9;

/// Classification of a fitted error sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateClass {
    Linear,
    NotLinear,
    /// Everything after the burn-in is already below [`FLOOR`].
    BelowFloor,
}

/// `‖e_n‖ ≤ C rⁿ` fitted on a window of an error sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    /// Envelope constant `max_n e_n / rⁿ` over the window.
    pub c: f64,
    pub r: f64,
    /// `R²` of the least-squares fit of `log e_n` against `n`.
    pub fit_quality: f64,
    pub burn_in: usize,
    pub n_used: usize,
    pub class: RateClass,
    /// Ratio of the smaller to the larger half-window slope; `0` when either
    /// half is not decreasing.
    pub slope_ratio: f64,
}

impl RateEstimate {
    pub fn is_r_linear(&self) -> bool {
        self.class != RateClass::NotLinear
    }

    pub fn label(&self) -> &'static str {
        match self.class {
            RateClass::Linear => "R-linear",
            RateClass::NotLinear => "not R-linear",
            RateClass::BelowFloor => "below floor",
        }
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn least_squares(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    LineFit { slope, intercept, r2 }
}

/// Default burn-in for `len` usable samples: 10%, at least 5, reduced when
/// that would leave fewer than [`MIN_FIT_SAMPLES`].
pub fn default_burn_in(len: usize) -> usize {
    let b = (len / 10).max(5);
    if len >= b + MIN_FIT_SAMPLES {
        b
    } else {
        len.saturating_sub(MIN_FIT_SAMPLES).min(b)
    }
}

/// Fits `e_n ≈ C rⁿ` after `burn_in` entries (default: [`default_burn_in`]).
///
/// The window ends at the first entry below [`FLOOR`]. The result is marked
/// not R-linear when `r ≥ 1`, when `R² < 0.9`, or when the log-slopes of the
/// two window halves disagree by more than a factor of two, which is how
/// polynomial decay shows up over a finite window.
pub fn fit_linear_rate(errors: &[f64], burn_in: Option<usize>) -> Result<RateEstimate> {
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::NonFinite);
    }
    let usable = errors.iter().position(|e| *e < FLOOR).unwrap_or(errors.len());
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(usable));
    if usable <= burn_in {
        let after = errors.len().saturating_sub(burn_in);
        if after >= MIN_FIT_SAMPLES {
            let c = errors[burn_in..].iter().copied().fold(0.0, f64::max);
            return Ok(RateEstimate {
                c,
                r: 0.0,
                fit_quality: 1.0,
                burn_in,
                n_used: after,
                class: RateClass::BelowFloor,
                slope_ratio: 1.0,
            });
        }
        return Err(Error::TooFewSamples { got: after, need: MIN_FIT_SAMPLES });
    }
    let n_used = usable - burn_in;
    if n_used < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { got: n_used, need: MIN_FIT_SAMPLES });
    }
    let points: Vec<(f64, f64)> = (burn_in..usable).map(|n| (n as f64, errors[n].ln())).collect();
    let fit = least_squares(&points);
    let r = fit.slope.exp();
    let log_c = points.iter().map(|(n, y)| y - n * fit.slope).fold(f64::NEG_INFINITY, f64::max);
    let c = log_c.exp();
    debug_assert!(log_c >= fit.intercept - 1e-9);

    let half = n_used / 2;
    let s1 = least_squares(&points[..half]).slope;
    let s2 = least_squares(&points[half..]).slope;
    let slope_ratio = if s1 < 0.0 && s2 < 0.0 { s1.max(s2) / s1.min(s2) } else { 0.0 };

    let linear = r < 1.0 && fit.r2 >= MIN_FIT_QUALITY && slope_ratio >= MIN_SLOPE_RATIO;
    Ok(RateEstimate {
        c,
        r,
        fit_quality: fit.r2,
        burn_in,
        n_used,
        class: if linear { RateClass::Linear } else { RateClass::NotLinear },
        slope_ratio,
    })
}

/// Extra iterations spent past the tolerance while the residual keeps falling.
pub const ORACLE_POLISH_ITERS: usize = 1000;

/// Iterates `x ← T_γ x` until `‖x − T_γx‖ ≤ tol·(1 + ‖x‖)`, then keeps going
/// while the residual still decreases and returns the best point seen.
pub fn fixed_point_oracle<F: OperatorFamily + ?Sized>(
    family: &F,
    gamma: f64,
    x0: &Vector,
    tol: Option<f64>,
    max_iters: Option<usize>,
) -> Result<Vector> {
    check_dim(family.dim(), x0.len())?;
    let tol = tol.unwrap_or(ORACLE_TOL);
    let max_iters = max_iters.unwrap_or(ORACLE_MAX_ITERS);
    let mut x = x0.clone();
    let mut best = (f64::INFINITY, x.clone());
    let mut polish: Option<usize> = None;
    for _ in 0..=max_iters {
        let t = family.apply(gamma, &x)?;
        let residual = (&x - &t).norm();
        if !residual.is_finite() {
            break;
        }
        if let Some(left) = polish.as_mut() {
            if residual >= best.0 || *left == 0 {
                return Ok(best.1);
            }
            *left -= 1;
        } else if residual <= tol * (1.0 + x.norm()) {
            polish = Some(ORACLE_POLISH_ITERS);
        }
        if residual < best.0 {
            best = (residual, x.clone());
        }
        if residual == 0.0 {
            return Ok(x);
        }
        x = t;
    }
    if polish.is_some() {
        return Ok(best.1);
    }
    Err(Error::NoConvergence(best.0))
}

/// Oracle fixed points keyed by `γ` at 12 significant digits.
///
/// A request for a `γ` that shares a key with a cached `γ'` but differs from
/// it is answered by relocating the cached point, so every returned point is
/// a fixed point of the requested operator.
#[derive(Clone, Debug, Default)]
pub struct FixedPointCache {
    points: HashMap<String, (f64, Vector)>,
    last: Option<Vector>,
}

fn cache_key(gamma: f64) -> String {
    format!("{gamma:.11e}")
}

impl FixedPointCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `x*_γ`, computed from `start` (or the last cached point) on a miss.
    pub fn get<F: OperatorFamily + ?Sized>(&mut self, family: &F, gamma: f64, start: &Vector) -> Result<Vector> {
        let key = cache_key(gamma);
        if let Some((g, x)) = self.points.get(&key) {
            return if *g == gamma { Ok(x.clone()) } else { family.relocate(gamma, *g, x) };
        }
        let from = self.last.as_ref().unwrap_or(start).clone();
        let x = fixed_point_oracle(family, gamma, &from, None, None)?;
        self.points.insert(key, (gamma, x.clone()));
        self.last = Some(x.clone());
        Ok(x)
    }
}

/// Fills `dist_to_fix` for every row.
///
/// Exact for families with a single fixed point; otherwise the distance to an
/// oracle point started at `x_n` is recorded and flagged as an upper bound.
pub fn annotate_distances<F: OperatorFamily + ?Sized>(
    family: &F,
    trace: &mut IterateTrace,
    cache: &mut FixedPointCache,
) -> Result<()> {
    let singleton = family.regularity().singleton_fix();
    for row in &mut trace.rows {
        if singleton {
            let p = cache.get(family, row.gamma, &row.x)?;
            row.dist_to_fix = Some((&row.x - p).norm());
            row.dist_is_upper_bound = false;
        } else {
            let p = fixed_point_oracle(family, row.gamma, &row.x, None, None)?;
            row.dist_to_fix = Some((&row.x - p).norm());
            row.dist_is_upper_bound = true;
        }
    }
    Ok(())
}

/// Outcome of a sampled inequality check.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub bound_name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over the samples.
    pub worst_ratio: f64,
    pub certified_constant: f64,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Axis-aligned sampling region.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    pub lower: Vector,
    pub upper: Vector,
}

impl SampleBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u && l.is_finite() && u.is_finite())) {
            return Err(Error::DomainError("sample box needs finite lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[center − radius, center + radius]` in every coordinate.
    pub fn cube(center: &Vector, radius: f64) -> Self {
        Self { lower: center.add_scalar(-radius), upper: center.add_scalar(radius) }
    }

    pub fn center(&self) -> Vector {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        uniform_in_box(rng, &self.lower, &self.upper)
    }
}

/// Checks `dist(x, Fix T_γ) ≤ κ‖x − T_γx‖` at seeded points of a box.
pub fn verify_error_bound<F: OperatorFamily + ?Sized>(
    family: &F,
    gamma: f64,
    kappa: f64,
    sample_box: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    if !family.regularity().singleton_fix() {
        return Err(Error::NonSingletonFix);
    }
    check_dim(family.dim(), sample_box.lower.len())?;
    let fixed = fixed_point_oracle(family, gamma, &sample_box.center(), None, None)?;
    let mut rng = seeded(seed);
    let mut report = BoundReport {
        bound_name: "error_bound".into(),
        samples,
        violations: 0,
        worst_ratio: 0.0,
        certified_constant: kappa,
    };
    for _ in 0..samples {
        let x = sample_box.sample(&mut rng);
        let dist = (&x - &fixed).norm();
        let rhs = kappa * family.fixed_point_residual(gamma, &x)?;
        if dist > rhs + BOUND_SLACK * (1.0 + x.norm()) {
            report.violations += 1;
        }
        if rhs > 0.0 {
            report.worst_ratio = report.worst_ratio.max(dist / rhs);
        } else if dist > 0.0 {
            report.worst_ratio = f64::INFINITY;
        }
    }
    Ok(report)
}

/// `√max{0, 1 − (1 − α)/(ακ²)}`.
pub fn one_step_factor(alpha: f64, kappa: f64) -> f64 {
    (1.0 - (1.0 - alpha) / (alpha * kappa * kappa)).max(0.0).sqrt()
}

/// Checks `dist_{n+1} ≤ ℓ_n·√(1 − (1−α)/(ακ²))·dist_n` along a trace whose
/// distances are filled in.
///
/// `worst_ratio` only counts steps with `dist_n ≥ 1e-10`, where the ratio is
/// not dominated by rounding.
pub fn verify_one_step_contraction<F: OperatorFamily + ?Sized>(
    family: &F,
    trace: &IterateTrace,
    kappa: f64,
) -> Result<BoundReport> {
    let dist = trace.distances()?;
    let alpha = family
        .regularity()
        .effective_alpha()
        .ok_or_else(|| Error::DomainError("family has no averagedness constant".into()))?;
    let q = one_step_factor(alpha, kappa);
    let mut report = BoundReport {
        bound_name: "one_step".into(),
        samples: dist.len().saturating_sub(1),
        violations: 0,
        worst_ratio: 0.0,
        certified_constant: q,
    };
    for n in 0..dist.len().saturating_sub(1) {
        let ell = family.relocator_lipschitz(trace.rows[n + 1].gamma, trace.rows[n].gamma);
        let rhs = ell * q * dist[n];
        if dist[n + 1] > rhs + BOUND_SLACK {
            report.violations += 1;
        }
        if dist[n] >= 1e-10 && rhs > 0.0 {
            report.worst_ratio = report.worst_ratio.max(dist[n + 1] / rhs);
        }
    }
    Ok(report)
}

/// Fitted rates of `dist(x_n, Fix T_{γ_n})` and `‖x_n − x∞‖`.
#[derive(Clone, Debug)]
pub struct RateTheoremReport {
    pub dist_rate: RateEstimate,
    pub iterate_rate: RateEstimate,
    pub pass: bool,
    /// The run with distances and errors filled in.
    pub trace: IterateTrace,
    pub limit: Vector,
}

/// Steps in the extended run used to estimate `x∞`, relative to `n_steps`.
pub const LIMIT_RUN_FACTOR: usize = 4;

/// `x∞` as the mean of the last five iterates of a run [`LIMIT_RUN_FACTOR`] times longer.
pub fn estimate_limit<F: OperatorFamily + ?Sized>(
    family: &F,
    schedule: &StepsizeSchedule,
    x0: &Vector,
    n_steps: usize,
) -> Result<Vector> {
    let long = relocated_iterate(family, schedule, x0, LIMIT_RUN_FACTOR * n_steps.max(5))?;
    let tail = &long.rows[long.rows.len() - 5..];
    Ok(tail.iter().fold(Vector::zeros(x0.len()), |acc, r| acc + &r.x) / tail.len() as f64)
}

/// Runs the relocated iteration and checks both rate claims of the theorem.
pub fn verify_rate_theorem<F: OperatorFamily + ?Sized>(
    family: &F,
    schedule: &StepsizeSchedule,
    x0: &Vector,
    n_steps: usize,
    cache: &mut FixedPointCache,
) -> Result<RateTheoremReport> {
    if !family.regularity().singleton_fix() {
        return Err(Error::NonSingletonFix);
    }
    let mut trace = relocated_iterate(family, schedule, x0, n_steps)?;
    let limit = estimate_limit(family, schedule, x0, n_steps)?;
    trace.set_limit(&limit);
    annotate_distances(family, &mut trace, cache)?;
    let dist_rate = fit_linear_rate(&trace.distances()?, None)?;
    let errors = trace.errors_to_limit().ok_or(Error::MissingDistances)?;
    let iterate_rate = fit_linear_rate(&errors, None)?;
    let ok = |e: &RateEstimate| e.is_r_linear() && e.fit_quality >= MIN_FIT_QUALITY;
    let pass = ok(&dist_rate) && ok(&iterate_rate);
    Ok(RateTheoremReport { dist_rate, iterate_rate, pass, trace, limit })
}

/// Worst residuals of the relocator laws over sampled stepsize triples.
#[derive(Clone, Debug, PartialEq)]
pub struct RelocatorLawReport {
    pub samples: usize,
    /// `‖Q_{γ←γ}x − x‖`
    pub identity: f64,
    /// `‖Q_{ε←δ}Q_{δ←γ}x − Q_{ε←γ}x‖`
    pub composition: f64,
    /// `‖Q_{γ←δ}Q_{δ←γ}x − x‖`
    pub round_trip: f64,
    /// `‖y − T_δ y‖` for `y = Q_{δ←γ}x`
    pub target_residual: f64,
}

impl RelocatorLawReport {
    pub fn worst(&self) -> f64 {
        self.identity.max(self.composition).max(self.round_trip).max(self.target_residual)
    }
}

/// Samples `(γ, δ, ε)` uniformly in `Γ` and checks the relocator laws on
/// oracle fixed points of `T_γ`.
pub fn verify_relocator_laws<F: OperatorFamily + ?Sized>(
    family: &F,
    start: &Vector,
    samples: usize,
    seed: u64,
    cache: &mut FixedPointCache,
) -> Result<RelocatorLawReport> {
    let interval = family.gamma_interval();
    let mut rng = seeded(seed);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        if interval.low == interval.high {
            interval.low
        } else {
            rng.random_range(interval.low..=interval.high)
        }
    };
    let mut report = RelocatorLawReport { samples, identity: 0.0, composition: 0.0, round_trip: 0.0, target_residual: 0.0 };
    for _ in 0..samples {
        let (g, d, e) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let x = cache.get(family, g, start)?;
        let y = family.relocate(d, g, &x)?;
        report.identity = report.identity.max((family.relocate(g, g, &x)? - &x).norm());
        let composed = family.relocate(e, d, &y)?;
        report.composition = report.composition.max((composed - family.relocate(e, g, &x)?).norm());
        report.round_trip = report.round_trip.max((family.relocate(g, d, &y)? - &x).norm());
        report.target_residual = report.target_residual.max(family.fixed_point_residual(d, &y)?);
    }
    Ok(report)
}
