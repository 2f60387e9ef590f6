//! Malitsky–Tam resolvent splitting for `0 ∈ (A₁ + … + A_N)x` on `H^{N−1}`.

use std::sync::OnceLock;

use crate::family::{
    check_schedule, guard, GammaInterval, IterateTrace, OperatorFamily, Regularity, StepsizeSchedule, TraceRow, FIX_TOL,
};
use crate::operators::{check_dim, check_finite, check_gamma, inclusion_residual, Operator};
use crate::sampling::{gaussian_vector, seeded, uniform_in_box};
use crate::{Error, Matrix, Result, Vector};

/// `θ` is kept this far inside `(0, 1)`.
pub const THETA_MARGIN: f64 = 1e-6;

pub const DEFAULT_THETA: f64 = 0.5;

/// Chain residuals above this mean the fixed point does not encode a zero.
pub const CHAIN_TOL: f64 = 1e-7;

const CERTIFICATE_GAMMAS: usize = 5;
const CERTIFICATE_PAIRS: usize = 2000;
const CERTIFICATE_SEED: u64 = 0x4d54;
const CERTIFICATE_RADIUS: f64 = 10.0;
const CERTIFICATE_MARGIN: f64 = 1e-6;

/// `N − 1` blocks of length `dim`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    blocks: usize,
    dim: usize,
    data: Vector,
}

impl BlockVector {
    pub fn new(blocks: usize, dim: usize, data: Vector) -> Result<Self> {
        check_dim(blocks * dim, data.len())?;
        Ok(Self { blocks, dim, data })
    }

    pub fn zeros(blocks: usize, dim: usize) -> Self {
        Self { blocks, dim, data: Vector::zeros(blocks * dim) }
    }

    pub fn from_blocks(blocks: &[Vector]) -> Result<Self> {
        let dim = blocks.first().map_or(0, Vector::len);
        let mut data = Vector::zeros(blocks.len() * dim);
        for (i, b) in blocks.iter().enumerate() {
            check_dim(dim, b.len())?;
            data.rows_mut(i * dim, dim).copy_from(b);
        }
        Ok(Self { blocks: blocks.len(), dim, data })
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn block_dim(&self) -> usize {
        self.dim
    }

    /// Block `i`, zero-based.
    pub fn block(&self, i: usize) -> Vector {
        self.data.rows(i * self.dim, self.dim).into_owned()
    }

    pub fn to_blocks(&self) -> Vec<Vector> {
        (0..self.blocks).map(|i| self.block(i)).collect()
    }

    pub fn as_vector(&self) -> &Vector {
        &self.data
    }

    pub fn into_vector(self) -> Vector {
        self.data
    }
}

fn split(x: &Vector, dim: usize) -> Vec<Vector> {
    (0..x.len() / dim).map(|i| x.rows(i * dim, dim).into_owned()).collect()
}

fn join(blocks: &[Vector]) -> Vector {
    let dim = blocks.first().map_or(0, Vector::len);
    let mut out = Vector::zeros(blocks.len() * dim);
    for (i, b) in blocks.iter().enumerate() {
        out.rows_mut(i * dim, dim).copy_from(b);
    }
    out
}

/// Which hypothesis yields uniform contraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContractionCase {
    /// `A₁ … A_{N−1}` monotone Lipschitz, `A_N` strongly monotone.
    LastStrong,
    /// `A₁ … A_{N−1}` strongly monotone Lipschitz, `A_N` monotone.
    FirstStrong,
}

/// Outcome of [`mt_contraction_certificate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCertificate {
    pub valid: bool,
    pub beta: Option<f64>,
    pub reason: Option<String>,
}

impl ContractionCertificate {
    fn rejected(reason: impl Into<String>) -> Self {
        Self { valid: false, beta: None, reason: Some(reason.into()) }
    }
}

/// Malitsky–Tam operators `T_γ` on block vectors, flattened for the generic driver.
#[derive(Debug)]
pub struct MtFamily {
    ops: Vec<Operator>,
    theta: f64,
    interval: GammaInterval,
    contraction: OnceLock<Option<f64>>,
}

impl Clone for MtFamily {
    fn clone(&self) -> Self {
        Self {
            ops: self.ops.clone(),
            theta: self.theta,
            interval: self.interval,
            contraction: self.contraction.clone(),
        }
    }
}

impl MtFamily {
    pub fn new(ops: Vec<Operator>, theta: f64, interval: GammaInterval) -> Result<Self> {
        if ops.len() < 2 {
            return Err(Error::DomainError(format!("need at least two operators, got {}", ops.len())));
        }
        let dim = ops[0].dim();
        for op in &ops {
            check_dim(dim, op.dim())?;
        }
        if !(THETA_MARGIN..=1.0 - THETA_MARGIN).contains(&theta) {
            return Err(Error::DomainError(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(Self { ops, theta, interval, contraction: OnceLock::new() })
    }

    pub fn operators(&self) -> &[Operator] {
        &self.ops
    }

    /// `N`.
    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    /// Dimension of one block.
    pub fn block_dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn check_blocks(&self, x: &Vector) -> Result<()> {
        let expected = (self.n_ops() - 1) * self.block_dim();
        if x.len() != expected {
            return Err(Error::BadBlockCount {
                expected: self.n_ops() - 1,
                got: x.len() / self.block_dim().max(1),
            });
        }
        Ok(())
    }

    /// `z¹ … z^N` for `x`.
    pub fn chain(&self, gamma: f64, x: &Vector) -> Result<Vec<Vector>> {
        self.check_blocks(x)?;
        let z1 = self.ops[0].resolvent(gamma, &x.rows(0, self.block_dim()).into_owned())?;
        self.chain_from(gamma, x, z1)
    }

    /// The chain with a given `z¹`.
    pub fn chain_from(&self, gamma: f64, x: &Vector, z1: Vector) -> Result<Vec<Vector>> {
        self.check_blocks(x)?;
        let xs = split(x, self.block_dim());
        let n = self.n_ops();
        let mut z = Vec::with_capacity(n);
        z.push(z1);
        for i in 1..n - 1 {
            let arg = &z[i - 1] + &xs[i] - &xs[i - 1];
            z.push(self.ops[i].resolvent(gamma, &arg)?);
        }
        let arg = &z[0] + &z[n - 2] - &xs[n - 2];
        z.push(self.ops[n - 1].resolvent(gamma, &arg)?);
        Ok(z)
    }

    fn step_from_chain(&self, x: &Vector, z: &[Vector]) -> Vector {
        let diffs: Vec<Vector> = z.windows(2).map(|w| &w[1] - &w[0]).collect();
        x + join(&diffs) * self.theta
    }

    /// `T_γ x` together with the chain.
    pub fn apply_with_chain(&self, gamma: f64, x: &Vector) -> Result<(Vector, Vec<Vector>)> {
        let z = self.chain(gamma, x)?;
        Ok((self.step_from_chain(x, &z), z))
    }

    /// Sampled contraction factor, when either structural case holds.
    pub fn contraction_factor(&self) -> Option<f64> {
        *self.contraction.get_or_init(|| {
            [ContractionCase::LastStrong, ContractionCase::FirstStrong]
                .into_iter()
                .filter_map(|case| mt_contraction_certificate(self, case).ok())
                .filter(|c| c.valid)
                .filter_map(|c| c.beta)
                .reduce(f64::min)
        })
    }
}

impl OperatorFamily for MtFamily {
    fn dim(&self) -> usize {
        (self.n_ops() - 1) * self.block_dim()
    }

    fn gamma_interval(&self) -> GammaInterval {
        self.interval
    }

    fn apply(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        Ok(self.apply_with_chain(gamma, x)?.0)
    }

    /// First block `(δ/γ)x¹ + (1 − δ/γ)J_{γA₁}x¹`, later blocks shifted by `(δ/γ)(xⁱ − x¹)`.
    fn relocate(&self, delta: f64, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(delta)?;
        self.check_blocks(x)?;
        let xs = split(x, self.block_dim());
        let t = delta / gamma;
        let q1 = &xs[0] * t + self.ops[0].resolvent(gamma, &xs[0])? * (1.0 - t);
        let out: Vec<Vector> = xs
            .iter()
            .enumerate()
            .map(|(i, xi)| if i == 0 { q1.clone() } else { (xi - &xs[0]) * t + &q1 })
            .collect();
        Ok(join(&out))
    }

    /// `Ľ_{δ←γ}`.
    fn relocator_lipschitz(&self, delta: f64, gamma: f64) -> f64 {
        lipschitz_check(delta, gamma, self.n_ops())
    }

    fn regularity(&self) -> Regularity {
        Regularity { averagedness: None, contraction: self.contraction_factor() }
    }
}

/// The two relocator Lipschitz constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtLipschitz {
    /// `Ľ`, used for summability.
    pub l_check: f64,
    /// `L̂`, the sharper constant.
    pub l_hat: f64,
}

fn lipschitz_check(delta: f64, gamma: f64, n: usize) -> f64 {
    let t = delta / gamma;
    let s = ((gamma - delta).abs() / gamma).sqrt();
    t.sqrt() + s * ((n - 1) as f64).sqrt().max((2.0 * n as f64).sqrt() * t.sqrt())
}

fn lipschitz_hat(delta: f64, gamma: f64, n: usize) -> f64 {
    let t = delta / gamma;
    let d = (gamma - delta).abs() / gamma;
    (t + (n - 1) as f64 * d).sqrt().max((t + 2.0 * n as f64 * t * d).sqrt())
}

pub fn mt_relocator_lipschitz(delta: f64, gamma: f64, n: usize) -> Result<MtLipschitz> {
    check_gamma(delta)?;
    check_gamma(gamma)?;
    if n < 2 {
        return Err(Error::DomainError(format!("need N >= 2, got {n}")));
    }
    Ok(MtLipschitz { l_check: lipschitz_check(delta, gamma, n), l_hat: lipschitz_hat(delta, gamma, n) })
}

/// Relocated Malitsky–Tam with blocks `z1 … zN` and `w` per row.
pub fn algorithm2_run(fam: &MtFamily, schedule: &StepsizeSchedule, x0: &BlockVector, n_steps: usize) -> Result<IterateTrace> {
    let x0 = x0.as_vector();
    fam.check_blocks(x0)?;
    check_finite(x0)?;
    check_schedule(fam, schedule, n_steps)?;
    let d = fam.block_dim();
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    let mut z1 = fam.ops[0].resolvent(schedule.gamma(0), &x.rows(0, d).into_owned())?;
    for n in 0..=n_steps {
        guard(n, &x)?;
        let gamma = schedule.gamma(n);
        let z = fam.chain_from(gamma, &x, z1)?;
        let w = fam.step_from_chain(&x, &z);
        let next = if n < n_steps {
            let ratio = schedule.gamma(n + 1) / gamma;
            let ws = split(&w, d);
            let z1_next = fam.ops[0].resolvent(gamma, &ws[0])?;
            let x1 = &ws[0] * ratio + &z1_next * (1.0 - ratio);
            let blocks: Vec<Vector> = ws
                .iter()
                .enumerate()
                .map(|(i, wi)| if i == 0 { x1.clone() } else { (wi - &ws[0]) * ratio + &x1 })
                .collect();
            Some((join(&blocks), z1_next))
        } else {
            None
        };
        let mut row = TraceRow::new(n, gamma, x, w.clone());
        for (i, zi) in z.into_iter().enumerate() {
            row.blocks.insert(format!("z{}", i + 1), zi);
        }
        row.blocks.insert("w".into(), w);
        rows.push(row);
        match next {
            Some((xn, zn)) => {
                x = xn;
                z1 = zn;
            }
            None => break,
        }
    }
    Ok(IterateTrace { rows })
}

/// `max_{i,j} ‖zⁱ − zʲ‖`.
pub fn consensus_gap(z: &[Vector]) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            gap = gap.max((&z[i] - &z[j]).norm());
        }
    }
    gap
}

/// Consensus gap of every row of an [`algorithm2_run`] trace.
pub fn consensus_gaps(trace: &IterateTrace, n_ops: usize) -> Result<Vec<f64>> {
    trace
        .rows
        .iter()
        .map(|row| {
            let z = (1..=n_ops).map(|i| row.block(&format!("z{i}")).cloned()).collect::<Result<Vec<_>>>()?;
            Ok(consensus_gap(&z))
        })
        .collect()
}

/// The zero encoded by a fixed point.
#[derive(Clone, Debug, PartialEq)]
pub struct MtZero {
    pub z: Vector,
    /// `‖z − J_{γAᵢ}(…)‖` for `i = 2 … N`.
    pub chain_residuals: Vec<f64>,
    /// Distance of `0` from `Σ Aᵢ(z)`.
    pub inclusion_residual: f64,
}

pub fn mt_fixed_point_to_zero(fam: &MtFamily, gamma: f64, x: &Vector) -> Result<MtZero> {
    fam.check_blocks(x)?;
    let residual = fam.fixed_point_residual(gamma, x)?;
    if residual > FIX_TOL * (1.0 + x.norm()) {
        return Err(Error::NotAFixedPoint { gamma, residual });
    }
    let xs = split(x, fam.block_dim());
    let n = fam.n_ops();
    let z = fam.ops[0].resolvent(gamma, &xs[0])?;
    let mut chain_residuals = Vec::with_capacity(n - 1);
    for i in 1..n - 1 {
        let arg = &xs[i] - &xs[i - 1] + &z;
        chain_residuals.push((&z - fam.ops[i].resolvent(gamma, &arg)?).norm());
    }
    let arg = &z * 2.0 - &xs[n - 2];
    chain_residuals.push((&z - fam.ops[n - 1].resolvent(gamma, &arg)?).norm());
    if let Some((k, &r)) = chain_residuals.iter().enumerate().find(|(_, &r)| r > CHAIN_TOL) {
        return Err(Error::ChainMismatch { block: k + 2, residual: r });
    }
    let ops: Vec<&Operator> = fam.ops.iter().collect();
    let inclusion_residual = inclusion_residual(&ops, &z, 1e-9 * (1.0 + z.norm()))?;
    Ok(MtZero { z, chain_residuals, inclusion_residual })
}

fn affine_jacobian_norm(fam: &MtFamily, gamma: f64) -> Result<f64> {
    let dim = fam.dim();
    let base = fam.apply(gamma, &Vector::zeros(dim))?;
    let mut jac = Matrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = Vector::zeros(dim);
        e[j] = 1.0;
        jac.set_column(j, &(fam.apply(gamma, &e)? - &base));
    }
    Ok(jac.svd(false, false).singular_values.max())
}

/// Checks case (a) or (b) structurally, then measures `β` as the largest
/// ratio `‖T_γx − T_γy‖/‖x − y‖` over 5 stepsizes and 2000 seeded pairs each.
/// When every operator is affine the exact operator norm at those stepsizes
/// is included.
pub fn mt_contraction_certificate(fam: &MtFamily, case: ContractionCase) -> Result<ContractionCertificate> {
    let n = fam.n_ops();
    let head = &fam.ops[..n - 1];
    let last = &fam.ops[n - 1];
    if head.iter().any(|op| op.lipschitz().is_none()) {
        return Ok(ContractionCertificate::rejected("A_1..A_{N-1} must be single-valued Lipschitz"));
    }
    let structural = match case {
        ContractionCase::LastStrong => last.mu() > 0.0,
        ContractionCase::FirstStrong => head.iter().all(|op| op.mu() > 0.0),
    };
    if !structural {
        return Ok(ContractionCertificate::rejected(match case {
            ContractionCase::LastStrong => "A_N is not strongly monotone",
            ContractionCase::FirstStrong => "A_1..A_{N-1} are not all strongly monotone",
        }));
    }

    let dim = fam.dim();
    let lo = Vector::repeat(dim, -CERTIFICATE_RADIUS);
    let hi = Vector::repeat(dim, CERTIFICATE_RADIUS);
    let all_affine = fam.ops.iter().all(|op| op.as_affine().is_some());
    let mut rng = seeded(CERTIFICATE_SEED);
    let mut beta: f64 = 0.0;
    for gamma in fam.interval.grid(CERTIFICATE_GAMMAS) {
        for k in 0..CERTIFICATE_PAIRS {
            let x = uniform_in_box(&mut rng, &lo, &hi);
            let y = if k % 2 == 0 {
                uniform_in_box(&mut rng, &lo, &hi)
            } else {
                &x + gaussian_vector(&mut rng, dim) * 1e-3
            };
            let dx = (&x - &y).norm();
            if dx > 0.0 {
                beta = beta.max((fam.apply(gamma, &x)? - fam.apply(gamma, &y)?).norm() / dx);
            }
        }
        if all_affine {
            beta = beta.max(affine_jacobian_norm(fam, gamma)?);
        }
    }
    let beta = beta + CERTIFICATE_MARGIN;
    if beta >= 1.0 - CERTIFICATE_MARGIN {
        return Ok(ContractionCertificate {
            valid: false,
            beta: None,
            reason: Some(format!("sampled ratio {beta} is not below 1")),
        });
    }
    Ok(ContractionCertificate { valid: true, beta: Some(beta), reason: None })
}

/// `M/(1 − √r)` bounding `Σ (Ľ_{γ_{n+1}←γ_n} − 1)` for `|γ_n − γ*| ≤ C rⁿ` in `[γ_low, γ_high]`.
pub fn mt_summability_bound(c: f64, r: f64, interval: GammaInterval, n: usize) -> f64 {
    let (lo, hi) = (interval.low, interval.high);
    let c = c.abs();
    let k = ((n - 1) as f64).sqrt().max((2.0 * n as f64).sqrt() * (hi / lo).sqrt());
    let m = c * (1.0 + r) / (2.0 * lo) + k * (c * (1.0 + r) / lo).sqrt();
    m / (1.0 - r.sqrt())
}
