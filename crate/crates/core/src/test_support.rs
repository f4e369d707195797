use crate::channel::{complex_gaussian, trial_rng};
use crate::linalg::{hermitize, ComplexMatrix};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = trial_rng(seed);
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng))
}

/// Random Hermitian positive-definite matrix `G Gᴴ + shift·I`.
pub fn random_pd(n: usize, shift: f64, seed: u64) -> ComplexMatrix {
    let g = random_matrix(n, n, seed);
    hermitize(&(&g * g.adjoint() + ComplexMatrix::identity(n, n).scale(shift)))
}
