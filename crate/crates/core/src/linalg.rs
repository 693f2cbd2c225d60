//! Small dense helpers shared by the filter and smoother.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used when forming `P^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Relative tolerance below which a negative eigenvalue is treated as round-off.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `(M + Mᵀ) / 2`, in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Inverse principal square root of a symmetric positive (semi)definite matrix.
///
/// Eigenvalues below `max(λ) * EIGEN_FLOOR` are clamped up to that floor. Fails only
/// when the spectrum has no positive part or contains non-finite values.
pub fn inv_sqrt_spd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(numerical("covariance contains non-finite entries"));
    }
    let eig = SymmetricEigen::new(p.clone());
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(numerical("covariance has no positive eigenvalue"));
    }
    let floor = max * EIGEN_FLOOR;
    let scales = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&scales);
    Ok(symmetrized(scaled * eig.eigenvectors.transpose()))
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| numerical(&format!("{what} is not positive definite")))
}

/// Check `P` against the PSD tolerance; clip negative eigenvalues to zero only when the
/// violation exceeds `PSD_TOLERANCE * ‖P‖_F`. Returns whether clipping happened.
pub fn enforce_psd(p: &mut DMatrix<f64>) -> bool {
    let n = p.nrows();
    let scale = p.norm();
    if scale == 0.0 {
        return false;
    }
    let shift = PSD_TOLERANCE * scale;
    let shifted = &*p + DMatrix::identity(n, n) * shift;
    if Cholesky::new(shifted).is_some() {
        return false;
    }
    let eig = SymmetricEigen::new(p.clone());
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    *p = symmetrized(rebuilt);
    true
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

fn numerical(reason: &str) -> Error {
    Error::Numerical {
        step: 0,
        reason: reason.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = inv_sqrt_spd(&p).unwrap();
        let prod = &r * &p * &r;
        assert!(rel_frobenius(&prod, &DMatrix::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn inv_sqrt_rejects_zero_matrix() {
        assert!(inv_sqrt_spd(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn psd_clip_only_on_real_violation() {
        let mut ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        assert!(!enforce_psd(&mut ok));
        let mut bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(enforce_psd(&mut bad));
        assert!(min_eigenvalue(&bad) >= -1e-15);
    }
}
