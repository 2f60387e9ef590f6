//! Maximally monotone building blocks and their resolvents.
//!
//! Operators are only ever touched through `J_{γA} = (Id + γA)⁻¹`, plus a
//! forward evaluation when the operator is single-valued. Two concrete kinds
//! cover every experiment in this crate:
//!
//! * [`AffineMonotoneOperator`]: `A(x) = Mx + b` with `(M + Mᵀ)/2 ⪰ 0`.
//! * [`BoxNormalCone`]: the normal cone of a box, whose resolvent is the
//!   componentwise clamp for every stepsize.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Dyn, LU};
use rand::Rng;

use crate::sampling::{seeded, uniform_in_box};
use crate::{Error, Matrix, Result, Vector};

/// Eigenvalue tolerance for the monotonicity test and the `μ > 0` decision.
pub const EIGEN_TOL: f64 = 1e-10;

/// Largest condition number accepted by [`AffineMonotoneOperator::inverse_apply`].
pub const MAX_CONDITION: f64 = 1e12;

const FACTOR_CACHE_SIZE: usize = 8;

type Factor = Arc<LU<f64, Dyn, Dyn>>;

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStepsize(gamma))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite(x: &Vector) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `A(x) = Mx + b` with a positive semidefinite symmetric part.
///
/// The strong-monotonicity modulus `μ` and the Lipschitz constant `‖M‖₂` are
/// computed at construction. Resolvent factorizations `(I + γM) = LU` are
/// kept in a small per-operator LRU keyed by `γ`.
pub struct AffineMonotoneOperator {
    matrix: Matrix,
    offset: Vector,
    mu: f64,
    lip: f64,
    min_sym_eigen: f64,
    max_sym_eigen: f64,
    symmetric: bool,
    factors: Mutex<VecDeque<(u64, Factor)>>,
    inverse: OnceLock<Option<Factor>>,
}

impl AffineMonotoneOperator {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 {
            return Err(Error::DomainError("operator dimension must be positive".into()));
        }
        check_dim(dim, matrix.ncols())?;
        check_dim(dim, offset.len())?;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        check_finite(&offset)?;

        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let min_sym_eigen = eig.eigenvalues.min();
        let max_sym_eigen = eig.eigenvalues.max();
        if min_sym_eigen < -EIGEN_TOL {
            return Err(Error::NotMonotone(min_sym_eigen));
        }
        let mu = if min_sym_eigen > EIGEN_TOL { min_sym_eigen } else { 0.0 };
        let lip = matrix.clone().svd(false, false).singular_values.max();
        let scale = 1.0 + matrix.amax();
        let symmetric = (&matrix - matrix.transpose()).amax() <= 1e-12 * scale;

        Ok(Self {
            matrix,
            offset,
            mu,
            lip,
            min_sym_eigen,
            max_sym_eigen,
            symmetric,
            factors: Mutex::new(VecDeque::with_capacity(FACTOR_CACHE_SIZE)),
            inverse: OnceLock::new(),
        })
    }

    /// The zero operator on `ℝ^dim`; its resolvent is the identity.
    pub fn zero(dim: usize) -> Self {
        Self::new(Matrix::zeros(dim, dim), Vector::zeros(dim)).expect("zero operator is monotone")
    }

    /// `A(x) = c·x`, `c ≥ 0`.
    pub fn scalar(dim: usize, c: f64) -> Result<Self> {
        Self::new(Matrix::identity(dim, dim) * c, Vector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    /// Strong-monotonicity modulus, `0` when the symmetric part is singular.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Operator 2-norm of `M`.
    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// Largest eigenvalue of the symmetric part.
    pub fn max_symmetric_eigenvalue(&self) -> f64 {
        self.max_sym_eigen
    }

    /// Smallest eigenvalue of the symmetric part, before clamping.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        self.min_sym_eigen
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn evaluate(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(&self.matrix * x + &self.offset)
    }

    /// `γA`, with its own metadata and factor cache.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Self::new(&self.matrix * gamma, &self.offset * gamma)
    }

    fn factor(&self, gamma: f64) -> Result<Factor> {
        let key = gamma.to_bits();
        let mut cache = self.factors.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(pos) = cache.iter().position(|(k, _)| *k == key) {
            let entry = cache.remove(pos).expect("position is in range");
            let factor = Arc::clone(&entry.1);
            cache.push_front(entry);
            return Ok(factor);
        }
        let dim = self.dim();
        let lu = (Matrix::identity(dim, dim) + &self.matrix * gamma).lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        let factor = Arc::new(lu);
        if cache.len() == FACTOR_CACHE_SIZE {
            cache.pop_back();
        }
        cache.push_front((key, Arc::clone(&factor)));
        Ok(factor)
    }

    /// `J_{γA}x = (I + γM)⁻¹(x − γb)`.
    pub fn resolvent(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(gamma)?;
        check_dim(self.dim(), x.len())?;
        let rhs = x - &self.offset * gamma;
        let y = self.factor(gamma)?.solve(&rhs).ok_or(Error::SingularSystem)?;
        check_finite(&y).map_err(|_| Error::SingularSystem)?;
        Ok(y)
    }

    fn inverse_factor(&self) -> Result<Factor> {
        self.inverse
            .get_or_init(|| {
                if self.mu == 0.0 {
                    let sv = self.matrix.clone().svd(false, false).singular_values;
                    let (lo, hi) = (sv.min(), sv.max());
                    if lo <= 0.0 || hi / lo > MAX_CONDITION {
                        return None;
                    }
                }
                let lu = self.matrix.clone().lu();
                lu.is_invertible().then(|| Arc::new(lu))
            })
            .clone()
            .ok_or(Error::SingularSystem)
    }

    /// Solves `Mx + b = y`, i.e. evaluates `A⁻¹y`.
    pub fn inverse_apply(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.dim(), y.len())?;
        let x = self
            .inverse_factor()?
            .solve(&(y - &self.offset))
            .ok_or(Error::SingularSystem)?;
        check_finite(&x).map_err(|_| Error::SingularSystem)?;
        Ok(x)
    }

    /// `A⁻¹` as an affine operator `y ↦ M⁻¹y − M⁻¹b`.
    pub fn inverse(&self) -> Result<Self> {
        let lu = self.inverse_factor()?;
        let m_inv = lu.try_inverse().ok_or(Error::SingularSystem)?;
        let offset = -(&m_inv * &self.offset);
        Self::new(m_inv, offset)
    }
}

impl Clone for AffineMonotoneOperator {
    fn clone(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            offset: self.offset.clone(),
            mu: self.mu,
            lip: self.lip,
            min_sym_eigen: self.min_sym_eigen,
            max_sym_eigen: self.max_sym_eigen,
            symmetric: self.symmetric,
            factors: Mutex::new(VecDeque::with_capacity(FACTOR_CACHE_SIZE)),
            inverse: OnceLock::new(),
        }
    }
}

impl fmt::Debug for AffineMonotoneOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineMonotoneOperator")
            .field("dim", &self.dim())
            .field("mu", &self.mu)
            .field("lip", &self.lip)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

/// Normal cone `N_C` of the box `C = [lower, upper]`. Bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxNormalCone {
    lower: Vector,
    upper: Vector,
}

impl BoxNormalCone {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::DomainError("box dimension must be positive".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(Error::EmptyBox(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn project(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// Distance from `v` to `N_C(z)`; infinite when `z ∉ C`.
    ///
    /// Coordinates within `tol` of a bound count as active.
    pub fn normal_cone_distance(&self, z: &Vector, v: &Vector, tol: f64) -> f64 {
        if !self.contains(z, tol) {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..z.len() {
            let at_lower = (z[i] - self.lower[i]).abs() <= tol;
            let at_upper = (self.upper[i] - z[i]).abs() <= tol;
            let excess = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => v[i].max(0.0),
                (false, true) => v[i].min(0.0),
                (false, false) => v[i],
            };
            acc += excess * excess;
        }
        acc.sqrt()
    }
}

/// A maximally monotone operator, accessed through its resolvent.
#[derive(Clone, Debug)]
pub enum Operator {
    Affine(Arc<AffineMonotoneOperator>),
    NormalCone(BoxNormalCone),
}

impl Operator {
    pub fn affine(matrix: Matrix, offset: Vector) -> Result<Self> {
        Ok(Self::Affine(Arc::new(AffineMonotoneOperator::new(matrix, offset)?)))
    }

    pub fn zero(dim: usize) -> Self {
        Self::Affine(Arc::new(AffineMonotoneOperator::zero(dim)))
    }

    pub fn normal_cone(lower: Vector, upper: Vector) -> Result<Self> {
        Ok(Self::NormalCone(BoxNormalCone::new(lower, upper)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Affine(a) => a.dim(),
            Self::NormalCone(c) => c.dim(),
        }
    }

    pub fn as_affine(&self) -> Option<&AffineMonotoneOperator> {
        match self {
            Self::Affine(a) => Some(a),
            Self::NormalCone(_) => None,
        }
    }

    /// Strong-monotonicity modulus (`0` for normal cones).
    pub fn mu(&self) -> f64 {
        self.as_affine().map_or(0.0, AffineMonotoneOperator::mu)
    }

    /// Lipschitz constant when single-valued with full domain.
    pub fn lipschitz(&self) -> Option<f64> {
        self.as_affine().map(AffineMonotoneOperator::lipschitz)
    }

    /// Paramonotone: symmetric affine maps and normal cones.
    pub fn is_paramonotone(&self) -> bool {
        self.as_affine().is_none_or(AffineMonotoneOperator::is_symmetric)
    }

    /// Forward evaluation; `None` for set-valued operators.
    pub fn evaluate(&self, x: &Vector) -> Option<Result<Vector>> {
        self.as_affine().map(|a| a.evaluate(x))
    }

    pub fn resolvent(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        check_gamma(gamma)?;
        check_finite(x)?;
        match self {
            Self::Affine(a) => a.resolvent(gamma, x),
            Self::NormalCone(c) => {
                check_dim(c.dim(), x.len())?;
                Ok(c.project(x))
            }
        }
    }

    /// `2J_{γA}x − x`.
    pub fn reflected_resolvent(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        Ok(self.resolvent(gamma, x)? * 2.0 - x)
    }
}

impl From<AffineMonotoneOperator> for Operator {
    fn from(a: AffineMonotoneOperator) -> Self {
        Self::Affine(Arc::new(a))
    }
}

impl From<BoxNormalCone> for Operator {
    fn from(c: BoxNormalCone) -> Self {
        Self::NormalCone(c)
    }
}

/// Distance of `0` from `Σ Aᵢ(z)` for affine operators and at most one box
/// normal cone.
pub fn inclusion_residual(ops: &[&Operator], z: &Vector, tol: f64) -> Result<f64> {
    let mut sum = Vector::zeros(z.len());
    let mut cone = None;
    for op in ops {
        match op {
            Operator::Affine(a) => sum += a.evaluate(z)?,
            Operator::NormalCone(c) => {
                if cone.replace(c).is_some() {
                    return Err(Error::UnsupportedOperator("more than one normal cone".into()));
                }
            }
        }
    }
    Ok(match cone {
        None => sum.norm(),
        Some(c) => c.normal_cone_distance(z, &(-sum), tol),
    })
}

/// Nonempty closed convex set with a computable projection.
#[derive(Clone, Debug)]
pub enum ConvexSet {
    Point(Vector),
    Box(BoxNormalCone),
    /// `origin + span(basis)`, `basis` with orthonormal columns.
    AffineSpan { origin: Vector, basis: Matrix },
}

impl ConvexSet {
    /// `origin + span(directions)`; the directions need not be independent.
    pub fn affine_span(origin: Vector, directions: Matrix) -> Result<Self> {
        check_dim(origin.len(), directions.nrows())?;
        if directions.ncols() == 0 {
            return Ok(Self::Point(origin));
        }
        let svd = directions.svd(true, false);
        let u = svd.u.ok_or_else(|| Error::UnsupportedSet("SVD failed".into()))?;
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 1e-12 * smax.max(1.0))
            .collect();
        if keep.is_empty() {
            return Ok(Self::Point(origin));
        }
        let basis = Matrix::from_columns(&keep.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
        Ok(Self::AffineSpan { origin, basis })
    }

    /// `zer A` of an affine operator, or the box itself for a normal cone.
    pub fn zero_set_of(op: &Operator) -> Result<Self> {
        match op {
            Operator::NormalCone(c) => Ok(Self::Box(c.clone())),
            Operator::Affine(a) => {
                let svd = a.matrix().clone().svd(true, true);
                let smax = svd.singular_values.max();
                let tol = 1e-10 * smax.max(1.0);
                let rhs = -a.offset();
                let particular = svd
                    .solve(&rhs, tol)
                    .map_err(|e| Error::UnsupportedSet(e.to_string()))?;
                let resid = (a.matrix() * &particular - &rhs).norm();
                if resid > 1e-8 * (1.0 + rhs.norm()) {
                    return Err(Error::UnsupportedSet("operator has no zero".into()));
                }
                let v_t = svd.v_t.ok_or_else(|| Error::UnsupportedSet("SVD failed".into()))?;
                let null: Vec<Vector> = (0..a.dim())
                    .filter(|&i| i >= svd.singular_values.len() || svd.singular_values[i] <= tol)
                    .map(|i| v_t.row(i).transpose())
                    .collect();
                if null.is_empty() {
                    Ok(Self::Point(particular))
                } else {
                    Self::affine_span(particular, Matrix::from_columns(&null))
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Point(p) => p.len(),
            Self::Box(b) => b.dim(),
            Self::AffineSpan { origin, .. } => origin.len(),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        match self {
            Self::Point(p) => p.clone(),
            Self::Box(b) => b.project(x),
            Self::AffineSpan { origin, basis } => {
                let d = x - origin;
                origin + basis * (basis.transpose() * d)
            }
        }
    }

    /// `t·X`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Ok(match self {
            Self::Point(p) => Self::Point(p * t),
            Self::Box(b) => {
                let (lo, hi) = (b.lower() * t, b.upper() * t);
                let (lo, hi) = if t >= 0.0 { (lo, hi) } else { (hi, lo) };
                Self::Box(BoxNormalCone::new(lo, hi)?)
            }
            Self::AffineSpan { origin, basis } => Self::AffineSpan { origin: origin * t, basis: basis.clone() },
        })
    }

    fn anchor(&self) -> Vector {
        match self {
            Self::Point(p) => p.clone(),
            Self::Box(b) => b.project(&Vector::zeros(b.dim())),
            Self::AffineSpan { origin, .. } => origin.clone(),
        }
    }
}

/// Outcome of a sampled relative strong-monotonicity test.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Points that landed in `dom A` and were tested.
    pub samples: usize,
    pub violations: usize,
    /// `min ⟨v − u, y − P_X y⟩ − μ‖y − P_X y‖²` over tested points.
    pub worst_margin: f64,
}

/// Half-width of the sampling cube used by [`check_relative_strong_monotonicity`].
pub const MONOTONICITY_SAMPLE_RADIUS: f64 = 5.0;

/// Tests `⟨v − u, y − P_X y⟩ ≥ μ‖y − P_X y‖² − 1e-9` at seeded points
/// `y` drawn uniformly from a cube around `X`.
pub fn check_relative_strong_monotonicity(
    op: &Operator,
    set: &ConvexSet,
    mu_claim: f64,
    sample_count: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let points = monotonicity_sample_points(set, sample_count, seed);
    check_relative_strong_monotonicity_at(op, set, mu_claim, &points)
}

/// The points [`check_relative_strong_monotonicity`] draws for `(set, seed)`.
pub fn monotonicity_sample_points(set: &ConvexSet, sample_count: usize, seed: u64) -> Vec<Vector> {
    let anchor = set.anchor();
    let lo = anchor.add_scalar(-MONOTONICITY_SAMPLE_RADIUS);
    let hi = anchor.add_scalar(MONOTONICITY_SAMPLE_RADIUS);
    let mut rng = seeded(seed);
    (0..sample_count).map(|_| uniform_in_box(&mut rng, &lo, &hi)).collect()
}

/// Same test at caller-supplied points.
///
/// For a normal cone only the selections `v = 0` (at `y ∈ C`) and `u = 0` are
/// tested; points outside `C` are skipped.
pub fn check_relative_strong_monotonicity_at(
    op: &Operator,
    set: &ConvexSet,
    mu_claim: f64,
    points: &[Vector],
) -> Result<MonotonicityReport> {
    check_dim(op.dim(), set.dim())?;
    let mut report = MonotonicityReport { samples: 0, violations: 0, worst_margin: f64::INFINITY };
    for y in points {
        check_dim(op.dim(), y.len())?;
        let p = set.project(y);
        let (v, u) = match op {
            Operator::Affine(a) => (a.evaluate(y)?, a.evaluate(&p)?),
            Operator::NormalCone(c) => {
                if !c.contains(y, 0.0) {
                    continue;
                }
                if !c.contains(&p, 1e-12) {
                    return Err(Error::UnsupportedSet("set is not contained in dom A".into()));
                }
                (Vector::zeros(y.len()), Vector::zeros(y.len()))
            }
        };
        let d = y - &p;
        let margin = (v - u).dot(&d) - mu_claim * d.norm_squared();
        report.samples += 1;
        if margin < -1e-9 {
            report.violations += 1;
        }
        report.worst_margin = report.worst_margin.min(margin);
    }
    Ok(report)
}

/// Largest sampled ratio `‖J_{γA}x − J_{γ'A}x'‖ / (‖x − x'‖ + |γ − γ'|)` over
/// seeded pairs in `[lower, upper] × [gamma_low, gamma_high]`.
pub fn resolvent_joint_lipschitz_estimate(
    op: &Operator,
    lower: &Vector,
    upper: &Vector,
    gamma_low: f64,
    gamma_high: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_gamma(gamma_low)?;
    check_gamma(gamma_high)?;
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = uniform_in_box(&mut rng, lower, upper);
        let y = uniform_in_box(&mut rng, lower, upper);
        let g1 = rng.random_range(gamma_low..=gamma_high);
        let g2 = rng.random_range(gamma_low..=gamma_high);
        let denom = (&x - &y).norm() + (g1 - g2).abs();
        if denom > 0.0 {
            let num = (op.resolvent(g1, &x)? - op.resolvent(g2, &y)?).norm();
            worst = worst.max(num / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn spd(seed: u64, spectrum: &[f64]) -> Matrix {
        let mut rng = seeded(seed);
        let q = crate::sampling::random_orthogonal(&mut rng, spectrum.len());
        &q * Matrix::from_diagonal(&Vector::from_row_slice(spectrum)) * q.transpose()
    }

    #[test]
    fn identity_resolvent_halves() {
        let op = Operator::affine(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let y = op.resolvent(1.0, &dvector![2.0, 2.0]).unwrap();
        assert_eq!(y, dvector![1.0, 1.0]);
    }

    #[test]
    fn zero_resolvent_is_identity() {
        let op = Operator::zero(3);
        let x = dvector![1.5, -2.0, 7.0];
        for gamma in [0.1, 1.0, 42.0] {
            assert_eq!(op.resolvent(gamma, &x).unwrap(), x);
            assert_eq!(op.reflected_resolvent(gamma, &x).unwrap(), x);
        }
    }

    #[test]
    fn reflected_identity() {
        let op = Operator::affine(Matrix::identity(1, 1), Vector::zeros(1)).unwrap();
        assert_eq!(op.reflected_resolvent(1.0, &dvector![2.0]).unwrap(), dvector![0.0]);
    }

    #[test]
    fn rejects_bad_stepsizes() {
        let op = Operator::zero(2);
        for g in [0.0, -1.0, f64::NAN] {
            assert!(matches!(op.resolvent(g, &dvector![1.0, 1.0]), Err(Error::NonPositiveStepsize(_))));
        }
        let cone = Operator::normal_cone(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert!(matches!(cone.resolvent(-0.5, &dvector![1.0, 1.0]), Err(Error::NonPositiveStepsize(_))));
    }

    #[test]
    fn rejects_non_monotone_matrix() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(AffineMonotoneOperator::new(m, Vector::zeros(2)), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn metadata_from_spectrum() {
        let a = AffineMonotoneOperator::new(spd(3, &[0.5, 1.0, 2.0]), Vector::zeros(3)).unwrap();
        assert_relative_eq!(a.mu(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.lipschitz(), 2.0, epsilon = 1e-12);
        assert!(a.is_symmetric());

        let skew = AffineMonotoneOperator::new(Matrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]), Vector::zeros(2)).unwrap();
        assert_eq!(skew.mu(), 0.0);
        assert_relative_eq!(skew.lipschitz(), 3.0, epsilon = 1e-12);
        assert!(!skew.is_symmetric());
    }

    #[test]
    fn resolvent_matches_direct_solve() {
        let m = spd(11, &[0.3, 0.9, 1.4, 2.2, 3.0]);
        let b = dvector![0.1, -0.4, 2.0, 0.0, -1.0];
        let x = dvector![1.0, 2.0, -3.0, 0.5, 0.25];
        let op = AffineMonotoneOperator::new(m.clone(), b.clone()).unwrap();
        let got = op.resolvent(0.7, &x).unwrap();
        let direct = (Matrix::identity(5, 5) + &m * 0.7).qr().solve(&(&x - &b * 0.7)).unwrap();
        assert!((got - &direct).amax() < 1e-12);
        let check = &direct + op.evaluate(&direct).unwrap() * 0.7 - &x;
        assert!(check.norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn factor_cache_evicts_oldest() {
        let op = AffineMonotoneOperator::new(spd(2, &[1.0, 2.0]), Vector::zeros(2)).unwrap();
        let x = dvector![1.0, 1.0];
        let first = op.resolvent(0.5, &x).unwrap();
        for k in 1..=20 {
            op.resolvent(0.5 + k as f64, &x).unwrap();
        }
        assert_eq!(op.factors.lock().unwrap().len(), FACTOR_CACHE_SIZE);
        assert_eq!(op.resolvent(0.5, &x).unwrap(), first);
    }

    #[test]
    fn inverse_apply_examples() {
        let op = AffineMonotoneOperator::new(Matrix::identity(1, 1) * 2.0, Vector::zeros(1)).unwrap();
        assert_eq!(op.inverse_apply(&dvector![4.0]).unwrap(), dvector![2.0]);
        let scaled = op.scaled(3.0).unwrap();
        assert_eq!(scaled.inverse_apply(&dvector![6.0]).unwrap(), dvector![1.0]);
        assert_eq!(op.inverse_apply(&(dvector![6.0] / 3.0)).unwrap(), dvector![1.0]);
    }

    #[test]
    fn inverse_apply_round_trip() {
        let m = Matrix::from_row_slice(4, 4, &[
            2.0, 1.0, 0.0, -0.5, //
            -1.0, 1.5, 0.3, 0.0, //
            0.0, -0.3, 1.0, 0.8, //
            0.5, 0.0, -0.8, 3.0,
        ]);
        let b = dvector![1.0, -2.0, 0.5, 0.0];
        let op = AffineMonotoneOperator::new(m, b).unwrap();
        let y = dvector![0.3, 0.1, -7.0, 2.0];
        let x = op.inverse_apply(&y).unwrap();
        assert!((op.evaluate(&x).unwrap() - &y).amax() < 1e-12);
    }

    #[test]
    fn singular_inverse_is_reported() {
        let op = AffineMonotoneOperator::new(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), Vector::zeros(2)).unwrap();
        assert!(matches!(op.inverse_apply(&dvector![1.0, 1.0]), Err(Error::SingularSystem)));
        assert!(matches!(op.inverse(), Err(Error::SingularSystem)));
    }

    #[test]
    fn box_resolvent_clamps_for_every_gamma() {
        let cone = Operator::normal_cone(dvector![-1.0, f64::NEG_INFINITY], dvector![1.0, 0.0]).unwrap();
        for gamma in [0.01, 1.0, 100.0] {
            assert_eq!(cone.resolvent(gamma, &dvector![3.0, 5.0]).unwrap(), dvector![1.0, 0.0]);
            assert_eq!(cone.resolvent(gamma, &dvector![-0.5, -9.0]).unwrap(), dvector![-0.5, -9.0]);
        }
        assert!(matches!(BoxNormalCone::new(dvector![1.0], dvector![0.0]), Err(Error::EmptyBox(0))));
    }

    #[test]
    fn normal_cone_distance_on_faces() {
        let c = BoxNormalCone::new(dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        // interior point: only v = 0 is normal
        assert_relative_eq!(c.normal_cone_distance(&dvector![0.5, 0.5], &dvector![3.0, 4.0], 1e-12), 5.0);
        // lower face in x, upper face in y: normal cone is (−∞,0] × [0,∞)
        assert_eq!(c.normal_cone_distance(&dvector![0.0, 1.0], &dvector![-2.0, 3.0], 1e-12), 0.0);
        assert_relative_eq!(c.normal_cone_distance(&dvector![0.0, 1.0], &dvector![2.0, -1.0], 1e-12), 5f64.sqrt());
        assert!(c.normal_cone_distance(&dvector![2.0, 0.5], &dvector![0.0, 0.0], 1e-12).is_infinite());
    }

    #[test]
    fn relative_monotonicity_equality_case() {
        let op = Operator::affine(Matrix::identity(3, 3) * 2.0, Vector::zeros(3)).unwrap();
        let set = ConvexSet::Point(Vector::zeros(3));
        let r = check_relative_strong_monotonicity(&op, &set, 2.0, 500, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.worst_margin.abs() < 1e-10);
    }

    #[test]
    fn relative_monotonicity_eigen_oracle() {
        let m = spd(5, &[0.5, 2.0]);
        let b = dvector![1.0, -1.0];
        let op = Operator::affine(m.clone(), b.clone()).unwrap();
        let set = ConvexSet::zero_set_of(&op).unwrap();
        assert!(matches!(set, ConvexSet::Point(_)));
        let pass = check_relative_strong_monotonicity(&op, &set, 0.5, 1000, 9).unwrap();
        assert_eq!(pass.violations, 0);
        let fail = check_relative_strong_monotonicity(&op, &set, 0.6, 1000, 9).unwrap();
        assert!(fail.violations >= 1);

        // Explicit probe along the λmin eigenvector.
        let eig = m.symmetric_eigen();
        let i = eig.eigenvalues.imin();
        let xstar = set.project(&Vector::zeros(2));
        let y = &xstar + eig.eigenvectors.column(i) * 3.0;
        let probe = check_relative_strong_monotonicity_at(&op, &set, 0.6, &[y]).unwrap();
        assert_eq!(probe.violations, 1);
    }

    #[test]
    fn zero_set_of_singular_operator_is_affine_span() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let op = Operator::affine(m, dvector![-2.0, 0.0]).unwrap();
        let set = ConvexSet::zero_set_of(&op).unwrap();
        let p = set.project(&dvector![5.0, 7.0]);
        assert!((p - dvector![2.0, 7.0]).amax() < 1e-12);

        let inconsistent = Operator::affine(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), dvector![0.0, 1.0]).unwrap();
        assert!(matches!(ConvexSet::zero_set_of(&inconsistent), Err(Error::UnsupportedSet(_))));
    }

    #[test]
    fn normal_cone_monotonicity_selection() {
        let op = Operator::normal_cone(dvector![-1.0, -1.0], dvector![1.0, 1.0]).unwrap();
        let set = ConvexSet::Point(Vector::zeros(2));
        let r = check_relative_strong_monotonicity(&op, &set, 0.0, 200, 3).unwrap();
        assert!(r.samples > 0 && r.samples < 200);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn joint_continuity_constant_is_finite() {
        let op = Operator::affine(spd(8, &[0.2, 1.0, 4.0]), dvector![1.0, 0.0, -1.0]).unwrap();
        let lo = Vector::repeat(3, -2.0);
        let hi = Vector::repeat(3, 2.0);
        let l = resolvent_joint_lipschitz_estimate(&op, &lo, &hi, 0.5, 2.0, 500, 4).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }
}
