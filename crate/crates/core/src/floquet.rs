//! One-period kicked-top propagator, resonance parameters and recurrence
//! detection.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QktError, Result};
use crate::linalg;
use crate::phase_space;
use crate::spin::{coherent_state, CoherentStateParams, SpinSystem};

/// Default tolerance for `U^n = e^{i phi} I`.
pub const RECURRENCE_TOL: f64 = 1e-8;

/// Default fidelity deficit accepted by [`entanglement_free_check`].
pub const COHERENT_FIT_TOL: f64 = 1e-6;

/// `U = exp(-i alpha J_z) exp(-i beta J_y^2 / (2j))`; the kick acts first.
#[derive(Debug, Clone)]
pub struct FloquetOperator {
    sys: Arc<SpinSystem>,
    pub alpha: f64,
    pub beta: f64,
    pub period_t: f64,
    kick: Array2<C64>,
    u: Array2<C64>,
}

impl FloquetOperator {
    pub fn new(sys: Arc<SpinSystem>, alpha: f64, beta: f64) -> Result<Self> {
        let kick = kick_operator(&sys, beta)?;
        Ok(Self::from_kick(sys, alpha, beta, kick))
    }

    /// Reuse an already computed kick factor; only the diagonal rotation
    /// depends on `alpha`, so nearby-alpha operators share it exactly.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self::from_kick(self.sys.clone(), alpha, self.beta, self.kick.clone())
    }

    fn from_kick(sys: Arc<SpinSystem>, alpha: f64, beta: f64, kick: Array2<C64>) -> Self {
        let phases = rotation_phases(&sys, alpha);
        let mut u = kick.clone();
        for (mut row, ph) in u.rows_mut().into_iter().zip(phases.iter()) {
            row.mapv_inplace(|z| z * ph);
        }
        Self {
            sys,
            alpha,
            beta,
            period_t: 1.0,
            kick,
            u,
        }
    }

    pub fn system(&self) -> &SpinSystem {
        &self.sys
    }

    pub fn system_arc(&self) -> Arc<SpinSystem> {
        self.sys.clone()
    }

    pub fn unitary(&self) -> &Array2<C64> {
        &self.u
    }

    pub fn kick(&self) -> &Array2<C64> {
        &self.kick
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        self.u.dot(psi)
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, rho: &Array2<C64>) -> Array2<C64> {
        self.u.dot(rho).dot(&linalg::dagger(&self.u))
    }

    /// Residual `max |U^n - e^{i phi} I|` with the phase estimated from the
    /// trace.
    pub fn recurrence_residual(&self, n: u32) -> (f64, C64) {
        let mut p = linalg::identity(self.dim());
        for _ in 0..n {
            p = self.u.dot(&p);
        }
        phase_residual(&p)
    }
}

/// `exp(-i alpha m)` in basis order.
fn rotation_phases(sys: &SpinSystem, alpha: f64) -> Array1<C64> {
    sys.m_values().mapv(|m| C64::new(0.0, -alpha * m).exp())
}

/// `exp(-i beta J_y^2 / (2j))`, evaluated on the spectrum of `J_y` so that the
/// eigenphases are computed from the integer eigenvalues `m_y` directly.
pub fn kick_operator(sys: &SpinSystem, beta: f64) -> Result<Array2<C64>> {
    if beta == 0.0 {
        return Ok(linalg::identity(sys.dim()));
    }
    let two_j = 2.0 * sys.j();
    linalg::hermitian_function(&sys.jy, |my| C64::new(0.0, -beta * my * my / two_j).exp())
}

pub fn build_floquet(sys: Arc<SpinSystem>, alpha: f64, beta: f64) -> Result<FloquetOperator> {
    FloquetOperator::new(sys, alpha, beta)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Resonant kick strength `4 pi j r / s`; `(r, s)` must be coprime.
pub fn resonance_beta(j: f64, r: u64, s: u64) -> Result<f64> {
    if r == 0 || s == 0 || gcd(r, s) != 1 {
        return Err(QktError::NotCoprime { r, s });
    }
    Ok(4.0 * std::f64::consts::PI * j * r as f64 / s as f64)
}

/// Smallest `n` with `U^n` proportional to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceResult {
    pub period: u32,
    pub global_phase: C64,
    pub residual: f64,
}

fn phase_residual(p: &Array2<C64>) -> (f64, C64) {
    let dim = p.nrows();
    let mean = linalg::trace(p.view()) / dim as f64;
    let phase = if mean.norm() > 0.0 {
        mean / mean.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let mut worst = 0.0_f64;
    for ((i, j), z) in p.indexed_iter() {
        let target = if i == j { phase } else { C64::new(0.0, 0.0) };
        worst = worst.max((z - target).norm());
    }
    (worst, phase)
}

/// Search `n = 1..=max_period` by repeated multiplication.
pub fn check_recurrence(f: &FloquetOperator, max_period: u32, tol: f64) -> Option<RecurrenceResult> {
    let u = f.unitary();
    let mut p = u.clone();
    for n in 1..=max_period {
        if n > 1 {
            p = u.dot(&p);
        }
        let (residual, global_phase) = phase_residual(&p);
        if residual < tol {
            return Some(RecurrenceResult {
                period: n,
                global_phase,
                residual,
            });
        }
    }
    None
}

/// Best coherent-state approximation of a pure state.
#[derive(Debug, Clone, Copy)]
pub struct CoherentFit {
    pub params: CoherentStateParams,
    pub fidelity: f64,
}

/// Maximize `|<Theta,Phi|psi>|^2`: grid search followed by a compass search
/// that halves its step until it falls below `1e-10` rad.
pub fn best_coherent_fit(sys: &SpinSystem, psi: &Array1<C64>) -> CoherentFit {
    let overlap = phase_space::CoherentOverlap::new(sys.n_spins());
    let f = |th: f64, ph: f64| overlap.husimi_pure(psi, CoherentStateParams::new(th, ph));

    let (n_theta, n_phi) = (48usize, 96usize);
    let d_theta = std::f64::consts::PI / n_theta as f64;
    let d_phi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut best = (0.0, 0.0, f(0.0, 0.0));
    for a in 0..=n_theta {
        for b in 0..n_phi {
            let (th, ph) = (a as f64 * d_theta, b as f64 * d_phi);
            let v = f(th, ph);
            if v > best.2 {
                best = (th, ph, v);
            }
        }
    }

    let (mut th, mut ph, mut val) = best;
    let mut step = d_theta;
    while step > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = f(th + dt, ph + dp);
            if v > val {
                th += dt;
                ph += dp;
                val = v;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    CoherentFit {
        params: CoherentStateParams::new(th, ph),
        fidelity: val,
    }
}

/// True when every sampled coherent state is mapped by one period onto
/// another coherent state, i.e. the best-fit fidelity exceeds `1 - tol`.
pub fn entanglement_free_check(
    f: &FloquetOperator,
    samples: &[CoherentStateParams],
    tol: f64,
) -> Result<bool> {
    for &p in samples {
        let psi = f.apply(&coherent_state(f.system(), p)?);
        if !is_coherent(f.system(), &psi, tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn is_coherent(sys: &SpinSystem, psi: &Array1<C64>, tol: f64) -> bool {
    best_coherent_fit(sys, psi).fidelity > 1.0 - tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, max_norm};
    use std::f64::consts::PI;

    fn sys(n: usize) -> Arc<SpinSystem> {
        Arc::new(SpinSystem::new(n).unwrap())
    }

    #[test]
    fn zero_kick_is_pure_rotation() {
        let s = sys(6);
        let f = FloquetOperator::new(s.clone(), 0.7, 0.0).unwrap();
        for (k, m) in s.m_values().iter().enumerate() {
            assert_eq!(f.unitary()[[k, k]], C64::new(0.0, -0.7 * m).exp());
        }
        let off: f64 = f
            .unitary()
            .indexed_iter()
            .filter(|((i, j), _)| i != j)
            .map(|(_, z)| z.norm())
            .sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn identity_at_origin() {
        let f = FloquetOperator::new(sys(8), 0.0, 0.0).unwrap();
        assert!(max_abs_diff(f.unitary().view(), linalg::identity(9).view()) == 0.0);
    }

    #[test]
    fn unitary_for_fig2_parameters() {
        let s = sys(112);
        let f = FloquetOperator::new(s.clone(), PI / 2.0, PI * s.j()).unwrap();
        let prod = f.unitary().dot(&linalg::dagger(f.unitary()));
        assert!(max_abs_diff(prod.view(), linalg::identity(113).view()) < 1e-10);
    }

    #[test]
    fn product_order_rotation_after_kick() {
        let s = sys(4);
        let (a, b) = (0.3, 1.1);
        let f = FloquetOperator::new(s.clone(), a, b).unwrap();
        let rot = linalg::unitary_from_hermitian(&s.jz, a).unwrap();
        let jy2 = s.jy.dot(&s.jy);
        let kick = linalg::unitary_from_hermitian(&jy2, b / (2.0 * s.j())).unwrap();
        let expected = rot.dot(&kick);
        assert!(max_abs_diff(f.unitary().view(), expected.view()) < 1e-12);
    }

    #[test]
    fn resonance_values() {
        assert!((resonance_beta(10.0, 1, 4).unwrap() - 10.0 * PI).abs() < 1e-12);
        assert!((resonance_beta(10.0, 1, 2).unwrap() - 20.0 * PI).abs() < 1e-12);
        assert!((resonance_beta(10.0, 1, 8).unwrap() - 5.0 * PI).abs() < 1e-12);
        assert!(matches!(resonance_beta(10.0, 2, 4), Err(QktError::NotCoprime { .. })));
        assert!(resonance_beta(10.0, 0, 3).is_err());
    }

    #[test]
    fn recurrence_cases_j10() {
        let s = sys(20);
        let j = s.j();
        for (beta, period) in [(2.0 * PI * j, 2), (PI * j, 8), (PI * j / 2.0, 48)] {
            let f = FloquetOperator::new(s.clone(), PI / 2.0, beta).unwrap();
            let r = check_recurrence(&f, 60, RECURRENCE_TOL).unwrap();
            assert_eq!(r.period, period);
            assert!(r.residual < 1e-8);
            assert!((r.global_phase.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_resonant_kick_has_no_recurrence() {
        let f = FloquetOperator::new(sys(20), PI / 2.0, 1.0).unwrap();
        assert!(check_recurrence(&f, 100, RECURRENCE_TOL).is_none());
    }

    #[test]
    fn recurrence_ignores_global_phase() {
        let s = sys(12);
        let f = FloquetOperator::new(s.clone(), PI / 2.0, PI * s.j()).unwrap();
        let mut g = f.clone();
        g.u.mapv_inplace(|z| z * C64::from_polar(1.0, 0.813));
        let a = check_recurrence(&f, 20, RECURRENCE_TOL).unwrap();
        let b = check_recurrence(&g, 20, RECURRENCE_TOL).unwrap();
        assert_eq!(a.period, b.period);
    }

    #[test]
    fn case_one_is_entanglement_free() {
        let s = sys(20);
        let f = FloquetOperator::new(s.clone(), PI / 2.0, 2.0 * PI * s.j()).unwrap();
        let samples = [CoherentStateParams::new(PI / 2.0, PI / 4.0)];
        assert!(entanglement_free_check(&f, &samples, COHERENT_FIT_TOL).unwrap());
    }

    #[test]
    fn pure_rotation_is_entanglement_free() {
        let f = FloquetOperator::new(sys(20), 0.9, 0.0).unwrap();
        let samples = [
            CoherentStateParams::new(PI / 2.0, PI / 4.0),
            CoherentStateParams::new(0.4, 2.0),
        ];
        assert!(entanglement_free_check(&f, &samples, COHERENT_FIT_TOL).unwrap());
    }

    #[test]
    fn case_two_splits_packets() {
        let s = sys(20);
        let f = FloquetOperator::new(s.clone(), PI / 2.0, PI * s.j()).unwrap();
        let mut psi = coherent_state(&s, CoherentStateParams::new(PI / 4.0, PI / 4.0)).unwrap();
        for _ in 0..3 {
            psi = f.apply(&psi);
        }
        assert!(!is_coherent(&s, &psi, COHERENT_FIT_TOL));
        let samples = [CoherentStateParams::new(PI / 2.0, PI / 4.0)];
        assert!(!entanglement_free_check(&f, &samples, COHERENT_FIT_TOL).unwrap());
    }

    #[test]
    fn with_alpha_matches_fresh_build() {
        let s = sys(10);
        let f = FloquetOperator::new(s.clone(), 0.2, 1.7).unwrap();
        let g = f.with_alpha(0.2 + 1e-3);
        let h = FloquetOperator::new(s, 0.2 + 1e-3, 1.7).unwrap();
        assert!(max_norm((g.unitary() - h.unitary()).view()) < 1e-13);
    }
}
