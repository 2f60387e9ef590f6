//! Douglas–Rachford: the family `T_γ x = x − J_{γA₁}x + J_{γA₂}(2J_{γA₁}x − x)`,
//! its relocator, the relocated algorithm, primal/dual recovery and the
//! closed-form constants `β_γ` and `κ_γ`.

use crate::family::{
    check_schedule, guard, GammaInterval, IterateTrace, OperatorFamily, Regularity, StepsizeSchedule, TraceRow, FIX_TOL,
};
use crate::operators::{check_dim, check_finite, check_gamma, inclusion_residual, Operator};
use crate::{Error, Result, Vector};

/// Points on the stepsize grid used for `β̄ = max_Γ β_γ`.
pub const CONTRACTION_GRID: usize = 1000;

/// Added to the grid maximum of `β_γ`.
pub const CONTRACTION_MARGIN: f64 = 1e-6;

/// The three sequences of one Douglas–Rachford step.
#[derive(Clone, Debug, PartialEq)]
pub struct DrParts {
    /// `J_{γA₁}x`
    pub z: Vector,
    /// `J_{γA₂}(2z − x)`
    pub y: Vector,
    /// `x − z + y = T_γ x`
    pub w: Vector,
}

/// Douglas–Rachford operators for `0 ∈ (A₁ + A₂)x` over `γ ∈ Γ`.
#[derive(Clone, Debug)]
pub struct DrFamily {
    a1: Operator,
    a2: Operator,
    interval: GammaInterval,
    contraction: Option<f64>,
}

impl DrFamily {
    /// The contraction factor is certified when `A₁` is Lipschitz and `A₂` is
    /// strongly monotone.
    pub fn new(a1: Operator, a2: Operator, interval: GammaInterval) -> Result<Self> {
        check_dim(a1.dim(), a2.dim())?;
        let contraction = match (a1.lipschitz(), a2.mu()) {
            (Some(l), mu) if mu > 0.0 => Some(max_contraction_factor(interval, mu, l)?),
            _ => None,
        };
        Ok(Self { a1, a2, interval, contraction })
    }

    pub fn a1(&self) -> &Operator {
        &self.a1
    }

    pub fn a2(&self) -> &Operator {
        &self.a2
    }

    /// `β̄`, when certified.
    pub fn contraction_factor(&self) -> Option<f64> {
        self.contraction
    }

    /// Default `(μ, ρ)` for `κ_γ`: the best strong-monotonicity modulus of
    /// `A₁, A₂` and the best `1/λmax` over the symmetric positive definite ones.
    pub fn default_moduli(&self) -> Option<(f64, f64)> {
        let mu = self.a1.mu().max(self.a2.mu());
        let rho = [&self.a1, &self.a2]
            .iter()
            .filter_map(|op| op.as_affine())
            .filter(|a| a.is_symmetric() && a.mu() > 0.0)
            .map(|a| 1.0 / a.max_symmetric_eigenvalue())
            .fold(0.0, f64::max);
        (mu > 0.0 && rho > 0.0).then_some((mu, rho))
    }

    /// `κ_γ` from [`DrFamily::default_moduli`].
    pub fn regularity_constant(&self, gamma: f64) -> Option<f64> {
        let (mu, rho) = self.default_moduli()?;
        dr_regularity_constant(gamma, mu, rho).ok()
    }

    /// `max_Γ κ_γ`, attained at an endpoint.
    pub fn uniform_regularity_constant(&self) -> Option<f64> {
        let lo = self.regularity_constant(self.interval.low)?;
        let hi = self.regularity_constant(self.interval.high)?;
        Some(lo.max(hi))
    }

    /// `z`, `y`, `w` of one step from `x`.
    pub fn parts(&self, gamma: f64, x: &Vector) -> Result<DrParts> {
        let z = self.a1.resolvent(gamma, x)?;
        self.parts_from(gamma, x, z)
    }

    fn parts_from(&self, gamma: f64, x: &Vector, z: Vector) -> Result<DrParts> {
        let y = self.a2.resolvent(gamma, &(&z * 2.0 - x))?;
        let w = x - &z + &y;
        Ok(DrParts { z, y, w })
    }
}

impl OperatorFamily for DrFamily {
    fn dim(&self) -> usize {
        self.a1.dim()
    }

    fn gamma_interval(&self) -> GammaInterval {
        self.interval
    }

    fn apply(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        Ok(self.parts(gamma, x)?.w)
    }

    /// `(δ/γ)x + (1 − δ/γ)J_{γA₁}x`.
    fn relocate(&self, delta: f64, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(delta)?;
        let z = self.a1.resolvent(gamma, x)?;
        let t = delta / gamma;
        Ok(x * t + z * (1.0 - t))
    }

    fn relocator_lipschitz(&self, delta: f64, gamma: f64) -> f64 {
        (delta / gamma).max(1.0)
    }

    fn regularity(&self) -> Regularity {
        Regularity { averagedness: Some(0.5), contraction: self.contraction }
    }
}

/// Relocated Douglas–Rachford in its `(x, z, y, w)` form.
///
/// Rows carry `x_n`, `T_{γ_n}x_n = w_n` and the blocks `z`, `y`, `w`.
pub fn algorithm1_run(fam: &DrFamily, schedule: &StepsizeSchedule, x0: &Vector, n_steps: usize) -> Result<IterateTrace> {
    check_dim(fam.dim(), x0.len())?;
    check_finite(x0)?;
    check_schedule(fam, schedule, n_steps)?;
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    let mut z = fam.a1.resolvent(schedule.gamma(0), x0)?;
    for n in 0..=n_steps {
        guard(n, &x)?;
        let gamma = schedule.gamma(n);
        let DrParts { z: zn, y, w } = fam.parts_from(gamma, &x, z)?;
        let next = if n < n_steps {
            let ratio = schedule.gamma(n + 1) / gamma;
            let z_next = fam.a1.resolvent(gamma, &w)?;
            let x_next = &w * ratio + &z_next * (1.0 - ratio);
            Some((x_next, z_next))
        } else {
            None
        };
        let mut row = TraceRow::new(n, gamma, x, w.clone());
        row.blocks.insert("z".into(), zn);
        row.blocks.insert("y".into(), y);
        row.blocks.insert("w".into(), w);
        rows.push(row);
        match next {
            Some((xn, zn)) => {
                x = xn;
                z = zn;
            }
            None => break,
        }
    }
    Ok(IterateTrace { rows })
}

/// Primal and dual sequences of a Douglas–Rachford trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDual {
    pub z: Vec<Vector>,
    pub y: Vec<Vector>,
    /// `(x_n − z_n)/γ_n`
    pub g: Vec<Vector>,
    /// `(w_n − y_n)/γ_n`
    pub h: Vec<Vector>,
}

pub fn primal_dual_extract(trace: &IterateTrace) -> Result<PrimalDual> {
    let mut out = PrimalDual { z: Vec::new(), y: Vec::new(), g: Vec::new(), h: Vec::new() };
    for row in &trace.rows {
        let z = row.block("z")?;
        let y = row.block("y")?;
        let w = row.block("w")?;
        out.g.push((&row.x - z) / row.gamma);
        out.h.push((w - y) / row.gamma);
        out.z.push(z.clone());
        out.y.push(y.clone());
    }
    Ok(out)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!("{name} must be positive, got {v}")))
    }
}

/// `β_γ` for `A₁` monotone `L`-Lipschitz and `A₂` `μ`-strongly monotone, `L ≥ 0`.
pub(crate) fn contraction_factor_unchecked(gamma: f64, mu: f64, l: f64) -> f64 {
    let gm = gamma * mu;
    let gl = gamma * l;
    let bracket = 1.0 - 1.0 / ((1.0 + gl) * (1.0 + gl)) - 1.0 / (1.0 + gl * gl);
    let radicand = 2.0 * gm * gm + 2.0 * gm + 1.0 + 2.0 * bracket * gm * (1.0 + gm);
    (radicand.sqrt() + 1.0) / (2.0 * (1.0 + gm))
}

/// Contraction factor of `T_γ` when `A₁` is monotone and `L`-Lipschitz and
/// `A₂` is `μ`-strongly monotone.
pub fn dr_contraction_factor(gamma: f64, mu: f64, l: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    check_positive("L", l)?;
    let beta = contraction_factor_unchecked(gamma, mu, l);
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::DomainError(format!("contraction factor {beta} outside (0,1)")));
    }
    Ok(beta)
}

/// `max_{γ∈Γ} β_γ` on a dense grid, plus [`CONTRACTION_MARGIN`]. `L = 0` is allowed.
pub fn max_contraction_factor(interval: GammaInterval, mu: f64, l: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::DomainError(format!("L must be nonnegative, got {l}")));
    }
    let beta = interval
        .grid(CONTRACTION_GRID)
        .into_iter()
        .chain([interval.low, interval.high])
        .map(|g| contraction_factor_unchecked(g, mu, l))
        .fold(0.0, f64::max);
    Ok(beta + CONTRACTION_MARGIN)
}

/// `κ_γ = 4(1 + max{1/(γμ), γ/ρ})`.
pub fn dr_regularity_constant(gamma: f64, mu: f64, rho: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    check_positive("rho", rho)?;
    Ok(4.0 * (1.0 + (1.0 / (gamma * mu)).max(gamma / rho)))
}

/// Bound on `Σ (max{1, γ_{n+1}/γ_n} − 1)` for `|γ_n − γ*| ≤ C rⁿ`.
pub fn dr_summability_bound(c: f64, r: f64, gamma_low: f64) -> f64 {
    c.abs() * (1.0 + r) / ((1.0 - r) * gamma_low)
}

/// `x = z + γg` split of a fixed point with its residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct FixDecomposition {
    pub z: Vector,
    pub g: Vector,
    /// Distance of `0` from `(A₁ + A₂)z`.
    pub primal_residual: f64,
    /// `‖A₁⁻¹g − A₂⁻¹(−g)‖`, or `‖z − J_{γA₂}(2z − x)‖` when an inverse is unavailable.
    pub dual_residual: f64,
    /// Set when the dual residual came from the resolvent characterization.
    pub dual_via_resolvent: bool,
    pub reconstruction_error: f64,
}

/// Splits a fixed point into primal `z ∈ P` and dual `g ∈ D` parts.
pub fn fix_decomposition_check(fam: &DrFamily, gamma: f64, x_fixed: &Vector) -> Result<FixDecomposition> {
    for op in [&fam.a1, &fam.a2] {
        if !op.is_paramonotone() {
            return Err(Error::UnsupportedOperator("decomposition needs symmetric affine operators or normal cones".into()));
        }
    }
    let residual = fam.fixed_point_residual(gamma, x_fixed)?;
    if residual > FIX_TOL * (1.0 + x_fixed.norm()) {
        return Err(Error::NotAFixedPoint { gamma, residual });
    }
    let parts = fam.parts(gamma, x_fixed)?;
    let z = parts.z;
    let g = (x_fixed - &z) / gamma;
    let reconstruction_error = (&z + &g * gamma - x_fixed).norm();
    let primal_residual = inclusion_residual(&[&fam.a1, &fam.a2], &z, 1e-9 * (1.0 + z.norm()))?;

    let inverses = fam
        .a1
        .as_affine()
        .zip(fam.a2.as_affine())
        .map(|(a1, a2)| Ok::<_, Error>((a1.inverse_apply(&g)?, a2.inverse_apply(&(-&g))?)));
    let (dual_residual, dual_via_resolvent) = match inverses {
        Some(Ok((u, v))) => ((u - v).norm(), false),
        Some(Err(Error::SingularSystem)) | None => ((&z - &parts.y).norm(), true),
        Some(Err(e)) => return Err(e),
    };
    Ok(FixDecomposition { z, g, primal_residual, dual_residual, dual_via_resolvent, reconstruction_error })
}

/// `z* ∈ zer(A₁ + A₂)` and `g* = A₁z*` for two affine operators.
pub fn affine_primal_dual(fam: &DrFamily) -> Result<(Vector, Vector)> {
    let (a1, a2) = fam
        .a1
        .as_affine()
        .zip(fam.a2.as_affine())
        .ok_or_else(|| Error::UnsupportedOperator("primal/dual solve needs affine operators".into()))?;
    let m = a1.matrix() + a2.matrix();
    let rhs = -(a1.offset() + a2.offset());
    let z = m.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    check_finite(&z).map_err(|_| Error::SingularSystem)?;
    let g = a1.evaluate(&z)?;
    Ok((z, g))
}
