//! Dense complex linear algebra shared by every solver stage.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, the numeric carrier for channels, precoders and
/// decoder/weight matrices.
pub type ComplexMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type ComplexVector = DVector<Complex64>;

/// Condition number beyond which a Hermitian inverse is refused.
pub const MAX_CONDITION: f64 = 1e12;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// `(m + mᴴ) / 2`.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Diag(v)` as a square matrix.
pub fn diag_matrix(v: &ComplexVector) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(v)
}

pub fn check_square(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_product(lhs: &ComplexMatrix, rhs: &ComplexMatrix, what: &str) -> Result<()> {
    if lhs.ncols() != rhs.nrows() {
        return Err(Error::Dimension(format!(
            "{what}: cannot multiply {}x{} by {}x{}",
            lhs.nrows(),
            lhs.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix with ascending real eigenvalues.
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: ComplexMatrix,
}

pub fn hermitian_eigen(m: &ComplexMatrix) -> HermitianEigen {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Inverse of a Hermitian positive-definite matrix, returned Hermitian.
///
/// Fails when the matrix is not positive definite or its condition number
/// exceeds [`MAX_CONDITION`].
pub fn hermitian_pd_inverse(m: &ComplexMatrix, what: &str) -> Result<ComplexMatrix> {
    check_square(m, what)?;
    let eig = hermitian_eigen(m);
    let n = eig.values.len();
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let lo = eig.values[0];
    let hi = eig.values[n - 1];
    if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Numeric(format!(
            "{what} is not positive definite (min eigenvalue {lo:e})"
        )));
    }
    let cond = hi / lo;
    if cond > MAX_CONDITION {
        return Err(Error::Numeric(format!(
            "{what} is ill-conditioned (condition {cond:e})"
        )));
    }
    let mut scaled = eig.vectors.clone();
    for k in 0..n {
        let s = 1.0 / eig.values[k];
        scaled.column_mut(k).scale_mut(s);
    }
    Ok(hermitize(&(scaled * eig.vectors.adjoint())))
}

/// `log₂ det` of a Hermitian positive-definite matrix via Cholesky.
pub fn log2_det_pd(m: &ComplexMatrix, what: &str) -> Result<f64> {
    check_square(m, what)?;
    let chol = nalgebra::Cholesky::new(hermitize(m)).ok_or_else(|| {
        Error::Numeric(format!("{what} is not positive definite"))
    })?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        // Complex square roots of negative pivots do not fail, so check them.
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-8 * d.re {
            return Err(Error::Numeric(format!("{what} is not positive definite")));
        }
        acc += d.re.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// Hadamard (entrywise) product.
pub fn hadamard(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.component_mul(b)
}

/// Phase of `z` mapped into `[0, 2π)`.
pub fn wrap_phase(z: Complex64) -> f64 {
    wrap_angle(z.arg())
}

pub fn wrap_angle(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut t = theta.rem_euclid(tau);
    if t >= tau {
        t = 0.0;
    }
    t
}

/// Unit-modulus vector with the phases of `v`; entries with zero modulus
/// map to 1.
pub fn unit_phase(v: &ComplexVector) -> ComplexVector {
    v.map(|z| {
        let r = z.norm();
        if r > 0.0 && r.is_finite() {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Real quadratic form value `vᴴ M v` for Hermitian `M`.
pub fn hermitian_form(m: &ComplexMatrix, v: &ComplexVector) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}
