//! Collective angular-momentum operators and SU(2) coherent states in the
//! symmetric (2j+1)-dimensional subspace of N = 2j spins.
//!
//! Basis order is fixed throughout the crate: index `k = 0..dim` holds the
//! `J_z` eigenstate with `m = j - k`, so `J_z = diag(j, j-1, ..., -j)`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QktError, Result};
use crate::linalg;

pub use crate::linalg::unitary_from_hermitian;

/// Collective spin operators for N spin-1/2 particles, N even.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    n_spins: usize,
    j: f64,
    pub jx: Array2<C64>,
    pub jy: Array2<C64>,
    pub jz: Array2<C64>,
    pub jplus: Array2<C64>,
    pub jminus: Array2<C64>,
}

impl SpinSystem {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins < 2 || !n_spins.is_multiple_of(2) {
            return Err(QktError::InvalidSpinCount(n_spins));
        }
        let j = n_spins as f64 / 2.0;
        let dim = n_spins + 1;
        let m = |k: usize| j - k as f64;

        let mut jz = Array2::zeros((dim, dim));
        let mut jplus = Array2::zeros((dim, dim));
        for k in 0..dim {
            jz[[k, k]] = C64::new(m(k), 0.0);
        }
        // J+ |j,m> = sqrt(j(j+1) - m(m+1)) |j,m+1>, and m+1 sits one index up.
        for k in 1..dim {
            let mk = m(k);
            jplus[[k - 1, k]] = C64::new((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
        }
        let jminus = linalg::dagger(&jplus);
        let jx = (&jplus + &jminus).mapv(|z| z * 0.5);
        let jy = (&jplus - &jminus).mapv(|z| z * C64::new(0.0, -0.5));
        Ok(Self {
            n_spins,
            j,
            jx,
            jy,
            jz,
            jplus,
            jminus,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    /// `J_z` eigenvalues in basis order.
    pub fn m_values(&self) -> Array1<f64> {
        Array1::from_iter((0..self.dim()).map(|k| self.j - k as f64))
    }

    /// `J_z` eigenvalues as complex diagonal, handy for elementwise products.
    pub fn jz_diag(&self) -> Array1<C64> {
        self.m_values().mapv(|m| C64::new(m, 0.0))
    }

    /// Basis vector `|j, m>`; `m` must be one of the allowed values.
    pub fn basis_state(&self, m: f64) -> Array1<C64> {
        let k = (self.j - m).round() as usize;
        let mut v = Array1::zeros(self.dim());
        v[k] = C64::new(1.0, 0.0);
        v
    }

    /// Coefficients `c_k` with `J_- |j, m_k> = c_k |j, m_k - 1>`.
    pub fn lowering_coefficients(&self) -> Array1<f64> {
        let j = self.j;
        Array1::from_iter((0..self.dim()).map(|k| {
            let m = j - k as f64;
            (j * (j + 1.0) - m * (m - 1.0)).max(0.0).sqrt()
        }))
    }

    /// Diagonal of `J_+ J_-`: `(j + m)(j - m + 1)`.
    pub fn raise_lower_diag(&self) -> Array1<f64> {
        let j = self.j;
        self.m_values().mapv(|m| (j + m) * (j - m + 1.0))
    }
}

/// Bloch-sphere direction of a spin coherent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentStateParams {
    pub theta: f64,
    pub phi: f64,
}

impl CoherentStateParams {
    /// Reduce to `theta in [0, pi]`, `phi in [0, 2pi)`.
    pub fn new(theta: f64, phi: f64) -> Self {
        let mut theta = theta.rem_euclid(2.0 * PI);
        let mut phi = phi;
        if theta > PI {
            theta = 2.0 * PI - theta;
            phi += PI;
        }
        Self {
            theta,
            phi: phi.rem_euclid(2.0 * PI),
        }
    }

    /// Unit vector on the Bloch sphere.
    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Great-circle angle between two directions.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let a = self.direction();
        let b = other.direction();
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        dot.clamp(-1.0, 1.0).acos()
    }
}

/// `|Theta, Phi> = exp[i Theta (J_x sin Phi - J_y cos Phi)] |j, j>`.
///
/// The rotation is built from the matrix exponential. The global phase is
/// then fixed so that the amplitudes coincide with
/// [`coherent_amplitudes`]: amplitude `k` (m = j - k) carries phase `k * Phi`,
/// which makes the `m = +j` amplitude real and non-negative.
pub fn coherent_state(sys: &SpinSystem, p: CoherentStateParams) -> Result<Array1<C64>> {
    if !p.theta.is_finite() || !p.phi.is_finite() {
        return Err(QktError::InvalidParameter(format!(
            "coherent state angles must be finite, got ({}, {})",
            p.theta, p.phi
        )));
    }
    let top = sys.basis_state(sys.j());
    if p.theta == 0.0 {
        return Ok(top);
    }
    let (sp, cp) = p.phi.sin_cos();
    // exp(i Theta A) = exp(-i Theta (-A)) with A = Jx sin(Phi) - Jy cos(Phi).
    let generator = (&sys.jy * C64::new(cp, 0.0)) - (&sys.jx * C64::new(sp, 0.0));
    let rot = unitary_from_hermitian(&generator, p.theta)?;
    let mut psi = rot.dot(&top);

    let (k_star, _) = psi
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (k, z)| if z.norm() > best.1 { (k, z.norm()) } else { best });
    let target = C64::from_polar(1.0, k_star as f64 * p.phi);
    let current = psi[k_star] / psi[k_star].norm();
    let fix = target / current;
    psi.mapv_inplace(|z| z * fix);
    Ok(psi)
}

/// Table of `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Real moduli `sqrt(C(2j, k)) cos^(2j-k)(Theta/2) sin^k(Theta/2)` for
/// `k = j - m = 0..dim`; the full amplitude is this times `exp(i k Phi)`.
pub fn coherent_moduli(n_spins: usize, theta: f64, ln_fact: &[f64]) -> Array1<f64> {
    let (s, c) = (theta / 2.0).sin_cos();
    let (s, c) = (s.abs(), c.abs());
    let (ls, lc) = (s.ln(), c.ln());
    Array1::from_iter((0..=n_spins).map(|k| {
        let ln_binom = ln_fact[n_spins] - ln_fact[k] - ln_fact[n_spins - k];
        let up = n_spins - k;
        let mut ln_amp = 0.5 * ln_binom;
        if up > 0 {
            ln_amp += up as f64 * lc;
        }
        if k > 0 {
            ln_amp += k as f64 * ls;
        }
        ln_amp.exp()
    }))
}

/// Closed-form coherent-state amplitudes in the basis order of [`SpinSystem`].
pub fn coherent_amplitudes(n_spins: usize, p: CoherentStateParams) -> Array1<C64> {
    let lf = ln_factorials(n_spins);
    let moduli = coherent_moduli(n_spins, p.theta, &lf);
    Array1::from_iter(
        moduli
            .iter()
            .enumerate()
            .map(|(k, &a)| C64::from_polar(a, k as f64 * p.phi)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, max_norm};

    fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
        a.dot(b) - b.dot(a)
    }

    #[test]
    fn spin_one_jz() {
        let s = SpinSystem::new(2).unwrap();
        let expected = Array2::from_diag(&ndarray::arr1(&[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        assert_eq!(s.jz, expected);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.j(), 1.0);
    }

    #[test]
    fn spin_one_commutator_exact() {
        let s = SpinSystem::new(2).unwrap();
        let c = commutator(&s.jx, &s.jy) - s.jz.mapv(|z| z * C64::i());
        assert!(max_norm(c.view()) < 1e-12);
    }

    #[test]
    fn ladder_matrix_elements() {
        let s = SpinSystem::new(2).unwrap();
        let r2 = 2f64.sqrt();
        assert!((s.jplus[[0, 1]].re - r2).abs() < 1e-15);
        assert!((s.jplus[[1, 2]].re - r2).abs() < 1e-15);
        assert!((s.jminus[[1, 0]].re - r2).abs() < 1e-15);
        assert_eq!(s.lowering_coefficients()[2], 0.0);
    }

    #[test]
    fn ladder_operators_compose_exactly() {
        let s = SpinSystem::new(6).unwrap();
        let jp = &s.jx + &s.jy.mapv(|z| z * C64::i());
        let jm = &s.jx - &s.jy.mapv(|z| z * C64::i());
        assert_eq!(max_abs_diff(jp.view(), s.jplus.view()), 0.0);
        assert_eq!(max_abs_diff(jm.view(), s.jminus.view()), 0.0);
    }

    #[test]
    fn casimir_j56() {
        let s = SpinSystem::new(112).unwrap();
        let cas = s.jx.dot(&s.jx) + s.jy.dot(&s.jy) + s.jz.dot(&s.jz);
        let target = linalg::identity(s.dim()).mapv(|z| z * 3192.0);
        assert!(max_abs_diff(cas.view(), target.view()) < 1e-10);
    }

    #[test]
    fn rejects_odd_and_small() {
        assert!(matches!(SpinSystem::new(3), Err(QktError::InvalidSpinCount(3))));
        assert!(matches!(SpinSystem::new(0), Err(QktError::InvalidSpinCount(0))));
        assert!(SpinSystem::new(1).is_err());
    }

    #[test]
    fn coherent_state_at_north_pole() {
        let s = SpinSystem::new(10).unwrap();
        for phi in [0.0, 1.0, 4.0] {
            let psi = coherent_state(&s, CoherentStateParams::new(0.0, phi)).unwrap();
            assert_eq!(psi, s.basis_state(5.0));
        }
    }

    #[test]
    fn coherent_state_full_flip() {
        let s = SpinSystem::new(10).unwrap();
        let psi = coherent_state(&s, CoherentStateParams::new(PI, 0.0)).unwrap();
        let ov = linalg::inner(psi.view(), s.basis_state(-5.0).view()).norm();
        assert!((ov - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_reduction() {
        let p = CoherentStateParams::new(-0.5, 0.25);
        assert!((p.theta - 0.5).abs() < 1e-15);
        assert!((p.phi - (0.25 + PI)).abs() < 1e-15);
        let q = CoherentStateParams::new(1.0, -0.5);
        assert!((q.phi - (2.0 * PI - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_rotation_spin_one() {
        let s = SpinSystem::new(2).unwrap();
        let p = CoherentStateParams::new(PI / 2.0, 0.0);
        let psi = coherent_state(&s, p).unwrap();
        let r2 = 0.5f64.sqrt();
        // sqrt(C(2,k)) (1/sqrt2)^2
        let expected = [0.5, r2, 0.5];
        for k in 0..3 {
            assert!((psi[k] - C64::new(expected[k], 0.0)).norm() < 1e-12, "k={k}");
        }
    }
}
