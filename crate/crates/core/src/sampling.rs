//! Seeded random draws shared by the samplers and problem generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Matrix, Vector};

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn uniform_in_box<R: Rng>(rng: &mut R, lower: &Vector, upper: &Vector) -> Vector {
    Vector::from_iterator(
        lower.len(),
        lower
            .iter()
            .zip(upper.iter())
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }),
    )
}

pub(crate) fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize) -> Vector {
    Vector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub(crate) fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign
/// ambiguity of `R`'s diagonal removed.
pub(crate) fn random_orthogonal<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    let qr = gaussian_matrix(rng, dim, dim).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
