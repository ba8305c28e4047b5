//! Husimi distributions on the sphere and wavepacket counting.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QktError, Result};
use crate::linalg;
use crate::spin::{coherent_moduli, ln_factorials, CoherentStateParams, SpinSystem};

pub const DEFAULT_N_THETA: usize = 128;
pub const DEFAULT_N_PHI: usize = 256;
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.5;

/// State handed to [`husimi`].
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a Array1<C64>),
    Mixed(&'a Array2<C64>),
}

impl StateRef<'_> {
    fn dim(&self) -> usize {
        match self {
            StateRef::Pure(v) => v.len(),
            StateRef::Mixed(m) => m.nrows(),
        }
    }
}

/// Closed-form coherent-state overlaps for one spin size.
pub(crate) struct CoherentOverlap {
    n_spins: usize,
    ln_fact: Vec<f64>,
}

impl CoherentOverlap {
    pub(crate) fn new(n_spins: usize) -> Self {
        Self {
            n_spins,
            ln_fact: ln_factorials(n_spins),
        }
    }

    pub(crate) fn moduli(&self, theta: f64) -> Array1<f64> {
        coherent_moduli(self.n_spins, theta, &self.ln_fact)
    }

    /// `|<Theta,Phi|psi>|^2`, cost linear in the dimension.
    pub(crate) fn husimi_pure(&self, psi: &Array1<C64>, p: CoherentStateParams) -> f64 {
        let a = self.moduli(p.theta);
        let step = C64::from_polar(1.0, -p.phi);
        let mut phase = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for (k, z) in psi.iter().enumerate() {
            acc += phase * a[k] * z;
            phase *= step;
        }
        acc.norm_sqr()
    }
}

/// Husimi function sampled on a uniform midpoint grid in `Theta` and a
/// uniform periodic grid in `Phi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Row-major `n_theta x n_phi`.
    pub values: Array2<f64>,
}

impl HusimiGrid {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Grid coordinates of the maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = ((0, 0), f64::NEG_INFINITY);
        for ((a, b), &v) in self.values.indexed_iter() {
            if v > best.1 {
                best = ((a, b), v);
            }
        }
        best.0
    }

    /// `(2j+1)/(4 pi) * sum P sin(Theta) dTheta dPhi`; 1 for a normalized state.
    pub fn normalization(&self, j: f64) -> f64 {
        let d_theta = PI / self.n_theta as f64;
        let d_phi = 2.0 * PI / self.n_phi as f64;
        let mut sum = 0.0;
        for (a, row) in self.values.rows().into_iter().enumerate() {
            sum += self.thetas[a].sin() * row.sum();
        }
        (2.0 * j + 1.0) / (4.0 * PI) * sum * d_theta * d_phi
    }

    /// Long format, one `theta,phi,q` row per grid point.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["theta", "phi", "q"])?;
        for ((a, b), v) in self.values.indexed_iter() {
            wtr.write_record([self.thetas[a].to_string(), self.phis[b].to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn theta_grid(n_theta: usize) -> Vec<f64> {
    (0..n_theta)
        .map(|a| (a as f64 + 0.5) * PI / n_theta as f64)
        .collect()
}

pub fn phi_grid(n_phi: usize) -> Vec<f64> {
    (0..n_phi).map(|b| b as f64 * 2.0 * PI / n_phi as f64).collect()
}

/// `P(Theta, Phi) = <Theta,Phi| rho |Theta,Phi>`.
///
/// With coherent amplitudes `a_k(Theta) e^{i k Phi}`, each row is a short
/// Fourier sum in `Phi`: for pure states over `a_k psi_k`, for density
/// matrices over the diagonals `S_d = sum_{k-l=d} a_k a_l rho_kl`.
pub fn husimi(sys: &SpinSystem, state: StateRef<'_>, n_theta: usize, n_phi: usize) -> Result<HusimiGrid> {
    if n_theta < 8 || n_phi < 8 {
        return Err(QktError::InvalidParameter(format!(
            "Husimi grid must be at least 8x8, got {n_theta}x{n_phi}"
        )));
    }
    let dim = sys.dim();
    if state.dim() != dim {
        return Err(QktError::DimensionMismatch {
            expected: dim,
            actual: state.dim(),
        });
    }
    let overlap = CoherentOverlap::new(sys.n_spins());
    let thetas = theta_grid(n_theta);
    let phis = phi_grid(n_phi);

    let rows: Vec<Vec<f64>> = thetas
        .par_iter()
        .map(|&theta| {
            let a = overlap.moduli(theta);
            match state {
                StateRef::Pure(psi) => {
                    let c: Vec<C64> = (0..dim).map(|k| psi[k] * a[k]).collect();
                    phis.iter()
                        .map(|&phi| {
                            let step = C64::from_polar(1.0, -phi);
                            let mut ph = C64::new(1.0, 0.0);
                            let mut acc = C64::new(0.0, 0.0);
                            for ck in &c {
                                acc += ph * ck;
                                ph *= step;
                            }
                            acc.norm_sqr()
                        })
                        .collect()
                }
                StateRef::Mixed(rho) => {
                    // s[d + dim - 1] holds S_d for d = k - l in -(dim-1)..dim.
                    let mut s = vec![C64::new(0.0, 0.0); 2 * dim - 1];
                    for k in 0..dim {
                        for l in 0..dim {
                            s[k + dim - 1 - l] += rho[[k, l]] * (a[k] * a[l]);
                        }
                    }
                    phis.iter()
                        .map(|&phi| {
                            let mut acc = 0.0;
                            for (idx, sd) in s.iter().enumerate() {
                                let d = idx as f64 - (dim as f64 - 1.0);
                                acc += (sd * C64::from_polar(1.0, -d * phi)).re;
                            }
                            acc
                        })
                        .collect()
                }
            }
        })
        .collect();

    let mut values = Array2::zeros((n_theta, n_phi));
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row.into_iter().enumerate() {
            values[[a, b]] = v.clamp(0.0, 1.0);
        }
    }
    Ok(HusimiGrid {
        n_theta,
        n_phi,
        thetas,
        phis,
        values,
    })
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Number of 8-connected components of `{P > rel_threshold * max P}`, with
/// `Phi` treated as periodic.
pub fn count_peaks(grid: &HusimiGrid, rel_threshold: f64) -> Result<usize> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(QktError::InvalidParameter(format!(
            "peak threshold must lie in (0, 1), got {rel_threshold}"
        )));
    }
    let (nt, np) = (grid.n_theta, grid.n_phi);
    let cut = rel_threshold * grid.max();
    let above = |a: usize, b: usize| grid.values[[a, b]] > cut;
    let idx = |a: usize, b: usize| a * np + b;
    let mut ds = DisjointSet::new(nt * np);
    for a in 0..nt {
        for b in 0..np {
            if !above(a, b) {
                continue;
            }
            for da in [-1i64, 0, 1] {
                let a2 = a as i64 + da;
                if a2 < 0 || a2 >= nt as i64 {
                    continue;
                }
                for db in [-1i64, 0, 1] {
                    let b2 = (b as i64 + db).rem_euclid(np as i64) as usize;
                    if above(a2 as usize, b2) {
                        ds.union(idx(a, b), idx(a2 as usize, b2));
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..nt)
        .flat_map(|a| (0..np).map(move |b| (a, b)))
        .filter(|&(a, b)| above(a, b))
        .map(|(a, b)| ds.find(idx(a, b)))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots.len())
}

/// `|<psi0|psit>|^2`.
pub fn recurrence_fidelity(psi0: &Array1<C64>, psit: &Array1<C64>) -> Result<f64> {
    if psi0.len() != psit.len() {
        return Err(QktError::DimensionMismatch {
            expected: psi0.len(),
            actual: psit.len(),
        });
    }
    Ok(linalg::inner(psi0.view(), psit.view()).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::coherent_state;

    #[test]
    fn coherent_state_has_one_peak_at_its_direction() {
        let s = SpinSystem::new(40).unwrap();
        let p = CoherentStateParams::new(1.0, 2.0);
        let psi = coherent_state(&s, p).unwrap();
        let g = husimi(&s, StateRef::Pure(&psi), 64, 128).unwrap();
        assert_eq!(count_peaks(&g, 0.5).unwrap(), 1);
        let (a, b) = g.argmax();
        assert!((g.thetas[a] - 1.0).abs() <= PI / 64.0);
        assert!((g.phis[b] - 2.0).abs() <= 2.0 * PI / 128.0);
        assert!(g.max() > 0.9);
    }

    #[test]
    fn top_state_closed_form() {
        let s = SpinSystem::new(12).unwrap();
        let top = s.basis_state(6.0);
        let g = husimi(&s, StateRef::Pure(&top), 16, 16).unwrap();
        for (a, &th) in g.thetas.iter().enumerate() {
            let expected = (th / 2.0).cos().powi(24);
            for b in 0..16 {
                assert!((g.values[[a, b]] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn normalization_default_grid() {
        let s = SpinSystem::new(112).unwrap();
        let psi = coherent_state(&s, CoherentStateParams::new(PI / 4.0, PI / 4.0)).unwrap();
        let g = husimi(&s, StateRef::Pure(&psi), DEFAULT_N_THETA, DEFAULT_N_PHI).unwrap();
        assert!((g.normalization(s.j()) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn polar_packet_has_midpoint_endpoint_error() {
        let h = PI / DEFAULT_N_THETA as f64;
        for n in [20usize, 112, 200] {
            let s = SpinSystem::new(n).unwrap();
            let psi = s.basis_state(s.j());
            let g = husimi(&s, StateRef::Pure(&psi), DEFAULT_N_THETA, DEFAULT_N_PHI).unwrap();
            let err = g.normalization(s.j()) - 1.0;
            let predicted = (2.0 * s.j() + 1.0) * h * h / 48.0;
            assert!((err - predicted).abs() < 0.05 * predicted, "N={n}: {err:e} vs {predicted:e}");
        }
    }

    #[test]
    fn rejects_tiny_grid_and_bad_threshold() {
        let s = SpinSystem::new(4).unwrap();
        let psi = s.basis_state(2.0);
        assert!(husimi(&s, StateRef::Pure(&psi), 4, 16).is_err());
        let g = husimi(&s, StateRef::Pure(&psi), 8, 8).unwrap();
        assert!(count_peaks(&g, 0.0).is_err());
        assert!(count_peaks(&g, 1.0).is_err());
    }

    #[test]
    fn peaks_wrap_in_phi() {
        let mut values = Array2::zeros((8, 16));
        values[[3, 0]] = 1.0;
        values[[3, 15]] = 1.0;
        values[[6, 7]] = 0.9;
        let g = HusimiGrid {
            n_theta: 8,
            n_phi: 16,
            thetas: theta_grid(8),
            phis: phi_grid(16),
            values,
        };
        assert_eq!(count_peaks(&g, 0.5).unwrap(), 2);
    }

    #[test]
    fn fidelity_basics() {
        let s = SpinSystem::new(6).unwrap();
        let a = s.basis_state(3.0);
        let b = s.basis_state(1.0);
        assert_eq!(recurrence_fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(recurrence_fidelity(&a, &b).unwrap(), 0.0);
        assert!(recurrence_fidelity(&a, &Array1::zeros(3)).is_err());
    }
}
