//! Stroboscopic pure-state propagation with the exact alpha-derivative, and
//! the QFI computed two ways: from the derivative and from the small-epsilon
//! limit of the Loschmidt echo.

use std::sync::Arc;

use ndarray::Array1;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QktError, Result};
use crate::floquet::FloquetOperator;
use crate::linalg::{inner, norm_sqr};
use crate::spin::{coherent_state, CoherentStateParams, SpinSystem};
use crate::trace::{Method, QfiTrace, TraceParams};

/// Finite-difference ladder for echo-based QFI.
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

/// Relative disagreement between extrapolation orders that triggers a warning.
pub const EXTRAPOLATION_WARN: f64 = 1e-3;

/// Allowed `| ||psi||^2 - 1 |` per 10^4 periods.
pub const NORM_DRIFT_BUDGET: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PureTrajectory {
    pub psi: Array1<C64>,
    /// `d psi / d alpha`.
    pub dpsi: Array1<C64>,
    pub step: u64,
    pub alpha0: f64,
}

impl PureTrajectory {
    /// Start at step 0; the initial state does not depend on alpha.
    pub fn new(psi0: Array1<C64>, alpha0: f64) -> Self {
        let dpsi = Array1::zeros(psi0.len());
        Self {
            psi: psi0,
            dpsi,
            step: 0,
            alpha0,
        }
    }

    pub fn norm_drift(&self) -> f64 {
        (norm_sqr(self.psi.view()) - 1.0).abs()
    }

    /// In-place version of [`step_with_derivative`].
    pub fn advance(&mut self, f: &FloquetOperator, jz: &Array1<C64>) {
        let u = f.unitary();
        let psi_new = u.dot(&self.psi);
        let mut dpsi_new = u.dot(&self.dpsi);
        let mi = C64::new(0.0, -1.0);
        for ((d, p), m) in dpsi_new.iter_mut().zip(psi_new.iter()).zip(jz.iter()) {
            *d += mi * m * p;
        }
        self.psi = psi_new;
        self.dpsi = dpsi_new;
        self.step += 1;
    }
}

/// `psi <- U psi`, `dpsi <- -i J_z U psi + U dpsi`, exact because
/// `d U / d alpha = -i J_z U`.
pub fn step_with_derivative(f: &FloquetOperator, traj: &PureTrajectory) -> Result<PureTrajectory> {
    if traj.psi.len() != f.dim() || traj.dpsi.len() != f.dim() {
        return Err(QktError::DimensionMismatch {
            expected: f.dim(),
            actual: traj.psi.len(),
        });
    }
    let mut next = traj.clone();
    next.advance(f, &f.system().jz_diag());
    Ok(next)
}

/// `4 (<dpsi|dpsi> - |<psi|dpsi>|^2)`, clipped at zero.
pub fn qfi_pure(traj: &PureTrajectory) -> f64 {
    let dd = norm_sqr(traj.dpsi.view());
    let pd = inner(traj.psi.view(), traj.dpsi.view()).norm_sqr();
    (4.0 * (dd - pd)).max(0.0)
}

/// `1 - |<a|b>|^2 / (|a|^2 |b|^2)` computed as the squared norm of the
/// component of `b` orthogonal to `a`, which avoids the cancellation of the
/// naive difference when the overlap is close to one.
pub fn echo_deficit(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    let na = norm_sqr(a.view());
    let nb = norm_sqr(b.view());
    let proj = inner(a.view(), b.view()) / na;
    let r: f64 = b
        .iter()
        .zip(a.iter())
        .map(|(bi, ai)| (bi - ai * proj).norm_sqr())
        .sum();
    (r / nb).clamp(0.0, 1.0)
}

fn evolve(f: &FloquetOperator, psi0: &Array1<C64>, n: u64) -> Array1<C64> {
    let mut psi = psi0.clone();
    for _ in 0..n {
        psi = f.apply(&psi);
    }
    psi
}

/// `F_eps(n) = |<psi0| U_alpha(n)^dagger U_{alpha+eps}(n) |psi0>|^2`.
pub fn loschmidt_echo(
    sys: Arc<SpinSystem>,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    psi0: &Array1<C64>,
    n: u64,
) -> Result<f64> {
    let f = FloquetOperator::new(sys, alpha, beta)?;
    let g = f.with_alpha(alpha + epsilon);
    let a = evolve(&f, psi0, n);
    let b = evolve(&g, psi0, n);
    Ok(1.0 - echo_deficit(&a, &b))
}

/// One finite-difference sample `4 (1 - F_eps) / eps^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoSample {
    pub epsilon: f64,
    pub deficit: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoQfi {
    pub value: f64,
    pub samples: Vec<EchoSample>,
    /// Relative gap between the full-order and next-lower-order extrapolants.
    pub residual: f64,
}

/// Extrapolate `g(eps)` to `eps -> 0` by a polynomial in `eps^2` of degree
/// `min(points - 1, 2)` (least squares when over-determined).
///
/// Returns `(value, residual)`, where the residual compares the result with
/// the one-order-lower extrapolant from the smallest epsilons.
pub fn richardson(points: &[(f64, f64)]) -> (f64, f64) {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    match pts.len() {
        0 => (0.0, 0.0),
        1 => (pts[0].1, 0.0),
        n => {
            let degree = (n - 1).min(2);
            let value = poly_intercept(&pts, degree);
            let lower = if degree == 1 {
                pts[0].1
            } else {
                poly_intercept(&pts[..2], 1)
            };
            let scale = value.abs().max(f64::MIN_POSITIVE);
            let residual = if value == lower { 0.0 } else { (value - lower).abs() / scale };
            (value, residual)
        }
    }
}

/// Intercept of the least-squares polynomial in `x = eps^2`.
fn poly_intercept(pts: &[(f64, f64)], degree: usize) -> f64 {
    let k = degree + 1;
    // Rescale x to O(1) to keep the normal equations well conditioned.
    let xmax = pts.iter().map(|p| p.0 * p.0).fold(0.0, f64::max);
    let xmax = if xmax > 0.0 { xmax } else { 1.0 };
    let mut a = vec![vec![0.0; k + 1]; k];
    for &(e, y) in pts {
        let x = e * e / xmax;
        let pows: Vec<f64> = (0..(2 * k)).map(|p| x.powi(p as i32)).collect();
        for r in 0..k {
            for c in 0..k {
                a[r][c] += pows[r + c];
            }
            a[r][k] += pows[r] * y;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        let d = a[col][col];
        if d == 0.0 {
            continue;
        }
        for r in 0..k {
            if r != col {
                let factor = a[r][col] / d;
                for c in col..=k {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    a[0][k] / a[0][0]
}

pub(crate) fn extrapolate(raw: Vec<EchoSample>) -> EchoQfi {
    let pts: Vec<(f64, f64)> = raw.iter().map(|s| (s.epsilon, s.estimate)).collect();
    let (value, residual) = richardson(&pts);
    if residual > EXTRAPOLATION_WARN {
        log::warn!(
            "echo extrapolation residual {residual:.3e} exceeds {EXTRAPOLATION_WARN:e}; epsilons {:?}",
            raw.iter().map(|s| s.epsilon).collect::<Vec<_>>()
        );
    }
    EchoQfi {
        value: value.max(0.0),
        samples: raw,
        residual,
    }
}

fn validate_ladder(eps: &[f64]) -> Result<()> {
    let mut sorted: Vec<f64> = eps.iter().map(|e| e.abs()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 || sorted.len() != eps.len() || sorted[0] == 0.0 {
        return Err(QktError::InvalidParameter(format!(
            "epsilon ladder needs at least two distinct non-zero values, got {eps:?}"
        )));
    }
    Ok(())
}

/// Echo ladder for pure states: the default ladder divided by `max(1, n j)`.
///
/// The QFI is bounded by `(2 n j)^2`, so this keeps `eps * sqrt(I) <= 2e-3`
/// and the finite-difference samples inside their quadratic regime.
pub fn pure_echo_ladder(n: u64, j: f64) -> Vec<f64> {
    let scale = (n as f64 * j).max(1.0);
    DEFAULT_EPSILONS.iter().map(|e| e / scale).collect()
}

/// Richardson-extrapolated `4 (1 - F_eps) / eps^2`.
pub fn qfi_from_echo(
    sys: Arc<SpinSystem>,
    alpha: f64,
    beta: f64,
    psi0: &Array1<C64>,
    n: u64,
    eps_list: &[f64],
) -> Result<EchoQfi> {
    validate_ladder(eps_list)?;
    let f = FloquetOperator::new(sys, alpha, beta)?;
    let base = evolve(&f, psi0, n);
    let raw = eps_list
        .iter()
        .map(|&eps| {
            let b = evolve(&f.with_alpha(alpha + eps), psi0, n);
            let deficit = echo_deficit(&base, &b);
            EchoSample {
                epsilon: eps,
                deficit,
                estimate: 4.0 * deficit / (eps * eps),
            }
        })
        .collect();
    Ok(extrapolate(raw))
}

/// Initial condition and schedule shared by the pure-state trace runners.
#[derive(Debug, Clone)]
pub struct PureRun {
    pub initial: CoherentStateParams,
    /// Offset already included in `beta`, recorded for the metadata.
    pub delta: f64,
    pub checkpoints: Vec<u64>,
}

fn trace_params(f: &FloquetOperator, run: &PureRun, method: Method, epsilons: Vec<f64>) -> TraceParams {
    TraceParams {
        n_spins: f.system().n_spins(),
        alpha: f.alpha,
        beta: f.beta,
        delta: run.delta,
        theta: run.initial.theta,
        phi: run.initial.phi,
        method,
        gamma: None,
        substeps: None,
        epsilons,
    }
}

fn check_drift(drift: f64, step: u64) -> Result<()> {
    let budget = NORM_DRIFT_BUDGET * (step as f64 / 1e4).max(1.0);
    if drift > budget {
        return Err(QktError::NormDrift { drift, steps: step });
    }
    Ok(())
}

/// Exact-derivative QFI at every checkpoint.
pub fn run_pure_exact(f: &FloquetOperator, run: &PureRun) -> Result<QfiTrace> {
    let psi0 = coherent_state(f.system(), run.initial)?;
    let jz = f.system().jz_diag();
    let mut traj = PureTrajectory::new(psi0, f.alpha);
    let mut out = QfiTrace::new(trace_params(f, run, Method::PureExact, vec![]));
    for &cp in &run.checkpoints {
        while traj.step < cp {
            traj.advance(f, &jz);
        }
        check_drift(traj.norm_drift(), traj.step)?;
        out.push(cp, qfi_pure(&traj));
    }
    Ok(out)
}

/// Echo-based QFI at every checkpoint, one branch per epsilon propagated
/// alongside the reference branch.
pub fn run_pure_echo(f: &FloquetOperator, run: &PureRun, eps_list: &[f64]) -> Result<QfiTrace> {
    validate_ladder(eps_list)?;
    let psi0 = coherent_state(f.system(), run.initial)?;
    let shifted: Vec<FloquetOperator> = eps_list.iter().map(|e| f.with_alpha(f.alpha + e)).collect();
    let mut base = psi0.clone();
    let mut branches: Vec<Array1<C64>> = vec![psi0; eps_list.len()];
    let mut step = 0u64;
    let mut out = QfiTrace::new(trace_params(f, run, Method::PureEcho, eps_list.to_vec()));
    for &cp in &run.checkpoints {
        while step < cp {
            base = f.apply(&base);
            for (b, g) in branches.iter_mut().zip(shifted.iter()) {
                *b = g.apply(b);
            }
            step += 1;
        }
        check_drift((norm_sqr(base.view()) - 1.0).abs(), step)?;
        let raw = eps_list
            .iter()
            .zip(branches.iter())
            .map(|(&eps, b)| {
                let deficit = echo_deficit(&base, b);
                EchoSample {
                    epsilon: eps,
                    deficit,
                    estimate: 4.0 * deficit / (eps * eps),
                }
            })
            .collect();
        out.push(cp, extrapolate(raw).value);
    }
    Ok(out)
}
