//! Density-matrix evolution under the kicked top with collective
//! (superradiant) damping: between kicks only the dissipator acts, then the
//! state is conjugated by the one-period unitary,
//! `rho(t+T) = U [exp(Gamma T) rho(t)] U^dagger`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{QktError, Result};
use crate::floquet::FloquetOperator;
use crate::linalg::{self, psd_sqrt};
use crate::pure::{extrapolate, EchoQfi, EchoSample};
use crate::spin::{coherent_state, CoherentStateParams, SpinSystem};
use crate::trace::{DensityDiagnostics, Method, QfiTrace, TraceParams};

/// Upper bound on `gamma * N * h` accepted by the integrator.
pub const STABILITY_LIMIT: f64 = 0.05;

/// `gamma * N * h` targeted by [`default_substeps`].
pub const DEFAULT_STEP_PRODUCT: f64 = 0.01;

/// Trace deviation above which rho is renormalized after a period.
pub const TRACE_RENORM_TOL: f64 = 1e-10;

/// Minimum eigenvalue below which the run aborts.
pub const POSITIVITY_ABORT: f64 = -1e-6;

/// Relative eigenvalue cutoff used by the square roots in [`fidelity_mixed`].
pub const SQRT_CLIP: f64 = 1e-14;

/// Clipped eigenvalue weight above which [`fidelity_mixed`] logs a note.
pub const CLIP_LOG_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    pub rho: Array2<C64>,
    pub step: u64,
    pub gamma: f64,
    pub alpha: f64,
    /// Sum of `|tr(rho) - 1|` removed by renormalization so far.
    pub cumulative_trace_correction: f64,
    /// `|tr(rho) - 1|` measured before the most recent renormalization.
    pub last_trace_error: f64,
}

impl DensityTrajectory {
    pub fn pure(psi: &ndarray::Array1<C64>, gamma: f64, alpha: f64) -> Self {
        let n = psi.len();
        let mut rho = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                rho[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Self {
            rho,
            step: 0,
            gamma,
            alpha,
            cumulative_trace_correction: 0.0,
            last_trace_error: 0.0,
        }
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho.
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `Gamma rho = gamma (2 J- rho J+ - {J+ J-, rho})`.
///
/// Uses the bidiagonal structure of `J-`: `(J- rho J+)_{k,l} =
/// c_{k-1} c_{l-1} rho_{k-1,l-1}` and `J+ J-` is diagonal.
pub fn apply_superradiant_generator(sys: &SpinSystem, rho: &Array2<C64>, gamma: f64) -> Array2<C64> {
    let c = sys.lowering_coefficients();
    let d = sys.raise_lower_diag();
    let n = sys.dim();
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        for l in 0..n {
            let mut v = -(d[k] + d[l]) * rho[[k, l]];
            if k > 0 && l > 0 {
                v += 2.0 * c[k - 1] * c[l - 1] * rho[[k - 1, l - 1]];
            }
            out[[k, l]] = v * gamma;
        }
    }
    out
}

/// Smallest substep count with `gamma * N * (T / s) <= 0.01`.
pub fn default_substeps(gamma: f64, n_spins: usize) -> usize {
    let s = (gamma * n_spins as f64 / DEFAULT_STEP_PRODUCT).ceil();
    (s as usize).max(1)
}

/// Periods needed for a damped trace to settle: `60 / (gamma N)` rounded up
/// to a multiple of `stride`, clamped to `[512, 20000]`.
pub fn saturation_horizon(gamma: f64, n_spins: usize, stride: u64) -> u64 {
    const MIN: u64 = 512;
    const MAX: u64 = 20_000;
    let rate = gamma * n_spins as f64;
    if !(rate > 0.0) {
        return MAX;
    }
    let stride = stride.max(1);
    let raw = (60.0 / rate).ceil().min(MAX as f64) as u64;
    raw.div_ceil(stride).saturating_mul(stride).clamp(MIN, MAX)
}

fn check_step_guard(gamma: f64, n_spins: usize, substeps: usize) -> Result<()> {
    if substeps == 0 {
        return Err(QktError::InvalidParameter("substeps must be >= 1".into()));
    }
    let value = gamma * n_spins as f64 / substeps as f64;
    if value >= STABILITY_LIMIT {
        return Err(QktError::StepSizeGuard {
            value,
            limit: STABILITY_LIMIT,
            min_substeps: (gamma * n_spins as f64 / STABILITY_LIMIT).floor() as usize + 1,
        });
    }
    Ok(())
}

/// One period with classical RK4 for the dissipator, then conjugation by U.
/// Hermiticity is restored and the trace renormalized; positivity is not
/// checked here.
fn advance_unchecked(f: &FloquetOperator, traj: &mut DensityTrajectory, substeps: usize) {
    let sys = f.system();
    if traj.gamma != 0.0 {
        let h = f.period_t / substeps as f64;
        let g = traj.gamma;
        let mut rho = std::mem::take(&mut traj.rho);
        for _ in 0..substeps {
            let k1 = apply_superradiant_generator(sys, &rho, g);
            let k2 = apply_superradiant_generator(sys, &(&rho + &(&k1 * (h / 2.0))), g);
            let k3 = apply_superradiant_generator(sys, &(&rho + &(&k2 * (h / 2.0))), g);
            let k4 = apply_superradiant_generator(sys, &(&rho + &(&k3 * h)), g);
            rho = rho + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        traj.rho = rho;
    }
    let mut rho = f.conjugate(&traj.rho);
    linalg::hermitize(&mut rho);
    let tr = linalg::trace(rho.view()).re;
    traj.last_trace_error = (tr - 1.0).abs();
    if traj.last_trace_error > TRACE_RENORM_TOL {
        traj.cumulative_trace_correction += traj.last_trace_error;
        rho.mapv_inplace(|z| z / tr);
    }
    traj.rho = rho;
    traj.step += 1;
}

fn min_eigenvalue(rho: &Array2<C64>) -> Result<f64> {
    let (vals, _) = linalg::eigh(rho)?;
    Ok(vals.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// One full period of the noisy stroboscopic map, with the positivity guard.
pub fn dissipative_step(
    f: &FloquetOperator,
    traj: &DensityTrajectory,
    substeps: usize,
) -> Result<DensityTrajectory> {
    check_step_guard(traj.gamma, f.system().n_spins(), substeps)?;
    if traj.rho.nrows() != f.dim() {
        return Err(QktError::DimensionMismatch {
            expected: f.dim(),
            actual: traj.rho.nrows(),
        });
    }
    let mut next = traj.clone();
    advance_unchecked(f, &mut next, substeps);
    let min = min_eigenvalue(&next.rho)?;
    if min < POSITIVITY_ABORT {
        return Err(QktError::PositivityViolation {
            step: next.step,
            min_eigenvalue: min,
            substeps,
        });
    }
    Ok(next)
}

/// Uhlmann fidelity `|| sqrt(rho1) sqrt(rho2) ||_1^2`.
pub fn fidelity_mixed(rho1: &Array2<C64>, rho2: &Array2<C64>) -> Result<f64> {
    let a = psd_sqrt(rho1, SQRT_CLIP)?;
    let b = psd_sqrt(rho2, SQRT_CLIP)?;
    fidelity_from_roots(&a.sqrt, &b.sqrt, a.clipped_weight + b.clipped_weight)
}

fn fidelity_from_roots(a: &Array2<C64>, b: &Array2<C64>, clipped: f64) -> Result<f64> {
    if clipped > CLIP_LOG_WEIGHT {
        log::debug!("fidelity: clipped eigenvalue weight {clipped:.3e}");
    }
    let prod = a.dot(b);
    let sv = singular_values(&prod)?;
    let tn: f64 = sv.iter().sum();
    Ok((tn * tn).clamp(0.0, 1.0))
}

fn singular_values(m: &Array2<C64>) -> Result<Vec<f64>> {
    use ndarray_linalg::SVD;
    let (_, s, _) = m.svd(false, false)?;
    Ok(s.to_vec())
}

/// Reference branch at alpha plus one branch per epsilon, all under the same
/// noise, stepped in lockstep.
struct Branches {
    ops: Vec<FloquetOperator>,
    trajs: Vec<DensityTrajectory>,
    substeps: usize,
}

impl Branches {
    fn new(
        f: &FloquetOperator,
        psi0: &ndarray::Array1<C64>,
        gamma: f64,
        eps: &[f64],
        substeps: usize,
    ) -> Result<Self> {
        check_step_guard(gamma, f.system().n_spins(), substeps)?;
        let mut ops = vec![f.clone()];
        ops.extend(eps.iter().map(|e| f.with_alpha(f.alpha + e)));
        let trajs = ops
            .iter()
            .map(|op| DensityTrajectory::pure(psi0, gamma, op.alpha))
            .collect();
        Ok(Self { ops, trajs, substeps })
    }

    fn advance(&mut self) {
        let s = self.substeps;
        self.ops
            .par_iter()
            .zip(self.trajs.par_iter_mut())
            .for_each(|(op, t)| advance_unchecked(op, t, s));
    }

    /// Echo QFI from the current branch states, plus integrity diagnostics.
    fn measure(&self, eps: &[f64]) -> Result<(EchoQfi, DensityDiagnostics)> {
        let roots: Vec<_> = self
            .trajs
            .par_iter()
            .map(|t| psd_sqrt(&t.rho, SQRT_CLIP))
            .collect::<Result<Vec<_>>>()?;
        let step = self.trajs[0].step;
        let min_eig = roots.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
        if min_eig < POSITIVITY_ABORT {
            return Err(QktError::PositivityViolation {
                step,
                min_eigenvalue: min_eig,
                substeps: self.substeps,
            });
        }
        let raw = eps
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let r = &roots[i + 1];
                let fid = fidelity_from_roots(&roots[0].sqrt, &r.sqrt, roots[0].clipped_weight + r.clipped_weight)?;
                let deficit = 1.0 - fid;
                Ok(EchoSample {
                    epsilon: e,
                    deficit,
                    estimate: 4.0 * deficit / (e * e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let trace_error = self.trajs.iter().map(|t| t.last_trace_error).fold(0.0, f64::max);
        Ok((
            extrapolate(raw),
            DensityDiagnostics {
                trace_error,
                min_eigenvalue: min_eig,
            },
        ))
    }
}

/// Mixed-state QFI after `n` periods from the Richardson-extrapolated echo.
#[allow(clippy::too_many_arguments)]
pub fn qfi_mixed(
    f: &FloquetOperator,
    gamma: f64,
    psi0: &ndarray::Array1<C64>,
    n: u64,
    eps_list: &[f64],
    substeps: usize,
) -> Result<EchoQfi> {
    if eps_list.len() < 2 {
        return Err(QktError::InvalidParameter("epsilon ladder needs at least two values".into()));
    }
    let mut b = Branches::new(f, psi0, gamma, eps_list, substeps)?;
    for _ in 0..n {
        b.advance();
    }
    if n == 0 {
        return Ok(EchoQfi {
            value: 0.0,
            samples: eps_list
                .iter()
                .map(|&e| EchoSample {
                    epsilon: e,
                    deficit: 0.0,
                    estimate: 0.0,
                })
                .collect(),
            residual: 0.0,
        });
    }
    Ok(b.measure(eps_list)?.0)
}

/// Settings of a dissipative QFI trace.
#[derive(Debug, Clone)]
pub struct DissipativeRun {
    pub gamma: f64,
    pub substeps: usize,
    pub initial: CoherentStateParams,
    pub delta: f64,
    pub epsilons: Vec<f64>,
    pub checkpoints: Vec<u64>,
}

pub fn run_dissipative(f: &FloquetOperator, run: &DissipativeRun) -> Result<QfiTrace> {
    let psi0 = coherent_state(f.system(), run.initial)?;
    let mut b = Branches::new(f, &psi0, run.gamma, &run.epsilons, run.substeps)?;
    let params = TraceParams {
        n_spins: f.system().n_spins(),
        alpha: f.alpha,
        beta: f.beta,
        delta: run.delta,
        theta: run.initial.theta,
        phi: run.initial.phi,
        method: Method::Dissipative,
        gamma: Some(run.gamma),
        substeps: Some(run.substeps),
        epsilons: run.epsilons.clone(),
    };
    let mut out = QfiTrace::new(params);
    for &cp in &run.checkpoints {
        while b.trajs[0].step < cp {
            b.advance();
        }
        if cp == 0 {
            out.push(0, 0.0);
            out.diagnostics.push(DensityDiagnostics {
                trace_error: 0.0,
                min_eigenvalue: 0.0,
            });
            continue;
        }
        let (q, d) = b.measure(&run.epsilons)?;
        out.push(cp, q.value);
        out.diagnostics.push(d);
    }
    let correction: f64 = b.trajs.iter().map(|t| t.cumulative_trace_correction).sum();
    if correction > 0.0 {
        log::info!("dissipative run: cumulative trace renormalization {correction:.3e}");
    }
    Ok(out)
}
