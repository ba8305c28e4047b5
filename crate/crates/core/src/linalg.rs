//! Dense complex matrix helpers shared by the propagators.
//!
//! Everything here works on `ndarray` arrays of `Complex64`. Products go
//! through BLAS (`zgemm`/`zgemv`), spectral work through LAPACK `zheev`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{QktError, Result};

/// Tolerance used when validating Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn identity(dim: usize) -> Array2<C64> {
    Array2::from_diag_elem(dim, C64::new(1.0, 0.0))
}

/// Conjugate transpose.
pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Largest entry modulus.
pub fn max_norm(m: ArrayView2<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0_f64, |acc, x, y| acc.max((x - y).norm()))
}

pub fn hermiticity_error(m: ArrayView2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Replace `m` by `(m + m^dagger)/2` in place.
pub fn hermitize(m: &mut Array2<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
}

pub fn trace(m: ArrayView2<C64>) -> C64 {
    m.diag().sum()
}

/// `<a|b>` with the first argument conjugated.
pub fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    Zip::from(a)
        .and(b)
        .fold(C64::new(0.0, 0.0), |acc, x, y| acc + x.conj() * y)
}

pub fn norm_sqr(a: ArrayView1<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `<v|M|v>` for a Hermitian `M`; the imaginary part is discarded.
pub fn expectation(m: &Array2<C64>, v: &Array1<C64>) -> f64 {
    inner(v.view(), m.dot(v).view()).re
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // Row-major input is read by LAPACK as its transpose, i.e. the conjugate.
    let mut a = Array2::zeros(m.raw_dim().f());
    a.assign(m);
    Ok(a.eigh(UPLO::Upper)?)
}

/// Apply a complex-valued scalar function to a Hermitian matrix through its
/// eigendecomposition: `V f(Lambda) V^dagger`.
pub fn hermitian_function<F>(h: &Array2<C64>, f: F) -> Result<Array2<C64>>
where
    F: Fn(f64) -> C64,
{
    let dev = hermiticity_error(h.view());
    if dev > HERMITIAN_TOL {
        return Err(QktError::NotHermitian {
            deviation: dev,
            tol: HERMITIAN_TOL,
        });
    }
    let (vals, vecs) = eigh(h)?;
    Ok(spectral_product(&vals, &vecs, f))
}

pub(crate) fn spectral_product<F>(vals: &Array1<f64>, vecs: &Array2<C64>, f: F) -> Array2<C64>
where
    F: Fn(f64) -> C64,
{
    let weights = vals.mapv(f);
    let mut scaled = vecs.clone();
    for (mut col, w) in scaled.columns_mut().into_iter().zip(weights.iter()) {
        col.mapv_inplace(|z| z * w);
    }
    scaled.dot(&dagger(vecs))
}

/// `exp(-i * scale * H)` for Hermitian `H`.
///
/// Diagonal inputs are exponentiated entrywise, so the result is exact up to
/// the accuracy of `f64::sin_cos`.
pub fn unitary_from_hermitian(h: &Array2<C64>, scale: f64) -> Result<Array2<C64>> {
    let dev = hermiticity_error(h.view());
    if dev > HERMITIAN_TOL {
        return Err(QktError::NotHermitian {
            deviation: dev,
            tol: HERMITIAN_TOL,
        });
    }
    let n = h.nrows();
    let off_diag = h
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .fold(0.0_f64, |acc, (_, z)| acc.max(z.norm()));
    if off_diag == 0.0 {
        let mut u = Array2::zeros((n, n));
        for i in 0..n {
            u[[i, i]] = C64::new(0.0, -scale * h[[i, i]].re).exp();
        }
        return Ok(u);
    }
    hermitian_function(h, |lam| C64::new(0.0, -scale * lam).exp())
}

/// Principal square root of a positive-semidefinite Hermitian matrix.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub sqrt: Array2<C64>,
    /// Smallest eigenvalue before clipping.
    pub min_eigenvalue: f64,
    /// Total magnitude of the eigenvalues that were clipped to zero.
    pub clipped_weight: f64,
}

/// Square root via eigendecomposition; eigenvalues below
/// `rel_clip * max_eigenvalue` are treated as zero.
pub fn psd_sqrt(rho: &Array2<C64>, rel_clip: f64) -> Result<PsdSqrt> {
    let (vals, vecs) = eigh(rho)?;
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let cutoff = rel_clip * max;
    let clipped_weight = vals
        .iter()
        .filter(|&&v| v < cutoff)
        .map(|v| v.abs())
        .sum();
    let sqrt = spectral_product(&vals, &vecs, |v| {
        if v < cutoff {
            C64::new(0.0, 0.0)
        } else {
            C64::new(v.sqrt(), 0.0)
        }
    });
    Ok(PsdSqrt {
        sqrt,
        min_eigenvalue: min,
        clipped_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_exponential_is_exact() {
        let h = Array2::from_diag(&ndarray::arr1(&[c(1.0, 0.0), c(-1.0, 0.0)]));
        let u = unitary_from_hermitian(&h, PI).unwrap();
        assert_eq!(u[[0, 0]], C64::new(0.0, -PI).exp());
        assert_eq!(u[[1, 1]], C64::new(0.0, PI).exp());
        assert!(max_abs_diff(u.view(), (-identity(2)).view()) < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = ndarray::arr2(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!(matches!(
            unitary_from_hermitian(&h, 1.0),
            Err(QktError::NotHermitian { .. })
        ));
    }

    #[test]
    fn pauli_x_rotation_matches_closed_form() {
        let h = ndarray::arr2(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
        let t = 0.37;
        let u = unitary_from_hermitian(&h, t).unwrap();
        let expected = ndarray::arr2(&[
            [c(t.cos(), 0.0), c(0.0, -t.sin())],
            [c(0.0, -t.sin()), c(t.cos(), 0.0)],
        ]);
        assert!(max_abs_diff(u.view(), expected.view()) < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let v = ndarray::arr1(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let mut rho = Array2::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                rho[[i, j]] = v[i] * v[j].conj() * 0.7;
            }
        }
        rho[[0, 0]] += c(0.15, 0.0);
        rho[[1, 1]] += c(0.15, 0.0);
        let s = psd_sqrt(&rho, 1e-14).unwrap();
        let d = max_abs_diff(s.sqrt.dot(&s.sqrt).view(), rho.view());
        assert!(d < 1e-13, "{d} {:?}", s.sqrt);
        assert!(s.min_eigenvalue > 0.0);
    }

    #[test]
    fn hermitize_projects() {
        let mut m = ndarray::arr2(&[[c(1.0, 0.1), c(2.0, 1.0)], [c(2.0, 0.0), c(3.0, 0.0)]]);
        hermitize(&mut m);
        assert_eq!(hermiticity_error(m.view()), 0.0);
        assert_eq!(m[[0, 1]], c(2.0, 0.5));
    }
}
