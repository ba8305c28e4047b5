use serde::{Deserialize, Serialize};

use crate::error::{QktError, Result};
use crate::trace::QfiTrace;

/// Power law `y = exp(log_prefactor) * x^exponent` fitted on log-log axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Standard error of the OLS slope.
    pub exponent_stderr: f64,
    pub log_prefactor: f64,
    /// Smallest and largest abscissa actually used.
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
}

/// Ordinary least squares of `ln y` on `ln x` over points with
/// `range.0 <= x <= range.1`.
pub fn fit_power_law(xs: &[f64], ys: &[f64], range: (f64, f64)) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(QktError::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    let mut pts = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if x < range.0 || x > range.1 {
            continue;
        }
        if !(x > 0.0) {
            return Err(QktError::NonPositive(x));
        }
        if !(y > 0.0) {
            return Err(QktError::NonPositive(y));
        }
        pts.push((x.ln(), y.ln(), x));
    }
    let n = pts.len();
    if n < 3 {
        return Err(QktError::InsufficientPoints(n));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(QktError::InvalidParameter("power-law fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let xmin = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let xmax = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit {
        exponent: slope,
        exponent_stderr: stderr,
        log_prefactor: intercept,
        fit_range: (xmin, xmax),
        r_squared,
        n_points: n,
    })
}

/// Time exponent of a trace over steps in `range` (step 0 is never used).
pub fn fit_trace(trace: &QfiTrace, range: (f64, f64)) -> Result<ScalingFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = trace
        .steps
        .iter()
        .zip(trace.qfi.iter())
        .filter(|(&s, _)| s > 0)
        .map(|(&s, &q)| (s as f64, q))
        .unzip();
    fit_power_law(&xs, &ys, range)
}

/// First step at which the QFI reaches `level` times its global maximum, or
/// `None` while the trace is still rising (maximum at the final point with a
/// positive final slope).
pub fn detect_saturation(trace: &QfiTrace, level: f64) -> Option<u64> {
    let n = trace.qfi.len();
    if n == 0 {
        return None;
    }
    let (imax, vmax) = trace
        .qfi
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if imax == n - 1 && n >= 2 && trace.qfi[n - 1] > trace.qfi[n - 2] {
        return None;
    }
    trace
        .qfi
        .iter()
        .position(|&v| v >= level * vmax)
        .map(|i| trace.steps[i])
}

/// Long-time level of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// First step from which every later value stays within `tol` of the
    /// running maximum of the tail.
    pub onset: u64,
    /// Mean over the tail.
    pub level: f64,
    pub n_points: usize,
}

/// Find the earliest index `i` such that `min(tail) >= (1 - tol) * max(tail)`
/// for `tail = qfi[i..]`, requiring at least `min_points` tail values.
pub fn detect_plateau(trace: &QfiTrace, tol: f64, min_points: usize) -> Option<Plateau> {
    let n = trace.qfi.len();
    if n < min_points.max(1) {
        return None;
    }
    // Scan backwards keeping suffix extrema.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut onset = None;
    for i in (0..n).rev() {
        lo = lo.min(trace.qfi[i]);
        hi = hi.max(trace.qfi[i]);
        if lo >= (1.0 - tol) * hi {
            onset = Some(i);
        } else {
            break;
        }
    }
    let i = onset?;
    let len = n - i;
    if len < min_points {
        return None;
    }
    let level = trace.qfi[i..].iter().sum::<f64>() / len as f64;
    Some(Plateau {
        onset: trace.steps[i],
        level,
        n_points: len,
    })
}
