//! Test-side oracles built directly on dense linear algebra, independent of
//! the library's resolvent and iteration code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use relocsplit::operators::Operator;

pub type V = DVector<f64>;
pub type M = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> V {
    V::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> M {
    M::from_fn(n, n, |_, _| rng.sample(StandardNormal)).qr().q()
}

/// Symmetric matrix with eigenvalues evenly spread over `[lo, hi]`.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> M {
    let q = orthogonal(rng, n);
    let d = M::from_diagonal(&V::from_fn(n, |i, _| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Skew-symmetric matrix with operator norm `norm`.
pub fn skew(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> M {
    let q = orthogonal(rng, n);
    let mut b = M::zeros(n, n);
    for k in 0..n / 2 {
        b[(2 * k, 2 * k + 1)] = norm;
        b[(2 * k + 1, 2 * k)] = -norm;
    }
    let s = &q * b * q.transpose();
    (&s - s.transpose()) * 0.5
}

pub fn sym_extremes(m: &M) -> (f64, f64) {
    let e = ((m + m.transpose()) * 0.5).symmetric_eigenvalues();
    (e.min(), e.max())
}

pub fn op_norm(m: &M) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// `x ↦ Mx + b`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub m: M,
    pub b: V,
}

impl Affine {
    pub fn new(m: M, b: V) -> Self {
        Self { m, b }
    }

    pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Self {
        let m = spd(rng, n, lo, hi);
        Self { m, b: gaussian(rng, n) }
    }

    pub fn random_skew(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> Self {
        let m = skew(rng, n, norm);
        Self { m, b: gaussian(rng, n) }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn op(&self) -> Operator {
        Operator::affine(self.m.clone(), self.b.clone()).expect("monotone test matrix")
    }

    pub fn eval(&self, x: &V) -> V {
        &self.m * x + &self.b
    }

    /// Solves `(I + γM)y = x − γb`.
    pub fn resolvent(&self, gamma: f64, x: &V) -> V {
        let n = self.dim();
        let a = M::identity(n, n) + &self.m * gamma;
        a.lu().solve(&(x - &self.b * gamma)).expect("invertible")
    }
}

/// `x − J₁x + J₂(2J₁x − x)`.
pub fn dr_apply(a1: &Affine, a2: &Affine, gamma: f64, x: &V) -> V {
    let z = a1.resolvent(gamma, x);
    let y = a2.resolvent(gamma, &(&z * 2.0 - x));
    x - z + y
}

/// Zero of `Σ Aᵢ`.
pub fn zero_of_sum(ops: &[&Affine]) -> V {
    let n = ops[0].dim();
    let m = ops.iter().fold(M::zeros(n, n), |acc, a| acc + &a.m);
    let b = ops.iter().fold(V::zeros(n), |acc, a| acc + &a.b);
    m.lu().solve(&(-b)).expect("invertible sum")
}

/// `z* + γA₁z*`, the unique fixed point when the zero is unique.
pub fn dr_fixed_point(a1: &Affine, a2: &Affine, gamma: f64) -> V {
    let z = zero_of_sum(&[a1, a2]);
    a1.eval(&z) * gamma + z
}

/// `xⁱ = z + γ Σ_{j≤i} Aⱼz` for `i < N`, flattened.
pub fn mt_fixed_point(ops: &[Affine], gamma: f64) -> V {
    let refs: Vec<&Affine> = ops.iter().collect();
    let z = zero_of_sum(&refs);
    let d = z.len();
    let n = ops.len();
    let mut out = V::zeros((n - 1) * d);
    let mut acc = V::zeros(d);
    for (i, op) in ops.iter().take(n - 1).enumerate() {
        acc += op.eval(&z);
        out.rows_mut(i * d, d).copy_from(&(&z + &acc * gamma));
    }
    out
}

/// Straight-line Malitsky–Tam step with its chain.
pub fn mt_apply(ops: &[Affine], theta: f64, gamma: f64, x: &V) -> (V, Vec<V>) {
    let n = ops.len();
    let d = ops[0].dim();
    let xs: Vec<V> = (0..n - 1).map(|i| x.rows(i * d, d).into_owned()).collect();
    let mut z = vec![ops[0].resolvent(gamma, &xs[0])];
    for i in 1..n - 1 {
        let arg = &z[i - 1] + &xs[i] - &xs[i - 1];
        z.push(ops[i].resolvent(gamma, &arg));
    }
    let arg = &z[0] + &z[n - 2] - &xs[n - 2];
    z.push(ops[n - 1].resolvent(gamma, &arg));
    let mut out = x.clone();
    for i in 0..n - 1 {
        let mut blk = out.rows_mut(i * d, d);
        blk += (&z[i + 1] - &z[i]) * theta;
    }
    (out, z)
}

/// Closed form of `β_γ`.
pub fn beta_formula(gamma: f64, mu: f64, l: f64) -> f64 {
    let a = gamma * mu;
    let c = gamma * l;
    let inner = 1.0 - 1.0 / (1.0 + c).powi(2) - 1.0 / (1.0 + c * c);
    ((2.0 * a * a + 2.0 * a + 1.0 + 2.0 * inner * a * (1.0 + a)).sqrt() + 1.0) / (2.0 * (1.0 + a))
}

/// Operator norm of the linear part of an affine map `f`, by columns.
pub fn jacobian_norm(dim: usize, f: impl Fn(&V) -> V) -> f64 {
    let base = f(&V::zeros(dim));
    let mut jac = M::zeros(dim, dim);
    for j in 0..dim {
        let mut e = V::zeros(dim);
        e[j] = 1.0;
        jac.set_column(j, &(f(&e) - &base));
    }
    op_norm(&jac)
}

/// Closed form of `L̂_{δ←γ}`.
pub fn mt_l_hat(delta: f64, gamma: f64, n: usize) -> f64 {
    let t = delta / gamma;
    let d = (gamma - delta).abs() / gamma;
    let a = t + (n as f64 - 1.0) * d;
    let b = t + 2.0 * n as f64 * t * d;
    a.max(b).sqrt()
}

/// Closed form of `Ľ_{δ←γ}`.
pub fn mt_l_check(delta: f64, gamma: f64, n: usize) -> f64 {
    let t = delta / gamma;
    let d = (gamma - delta).abs() / gamma;
    t.sqrt() + d.sqrt() * (n as f64 - 1.0).sqrt().max((2.0 * n as f64 * t).sqrt())
}
