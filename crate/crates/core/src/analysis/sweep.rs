//! Parameter sweeps over N, time, gamma or delta, executed in parallel and
//! cached on disk by a content hash of the normalized spec.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::fit::{detect_plateau, detect_saturation, fit_power_law, fit_trace, Plateau, ScalingFit};
use crate::dissipative::{default_substeps, run_dissipative, saturation_horizon, DissipativeRun};
use crate::error::{QktError, Result};
use crate::floquet::FloquetOperator;
use crate::pure::{pure_echo_ladder, run_pure_echo, run_pure_exact, PureRun, DEFAULT_EPSILONS};
use crate::spin::{CoherentStateParams, SpinSystem};
use crate::trace::{checkpoints, Method, QfiTrace, TOOL_VERSION};

/// Environment variable overriding the sweep cache directory.
pub const CACHE_DIR_ENV: &str = "QKT_CACHE_DIR";

/// Saturation level used for `t_max`.
pub const SATURATION_LEVEL: f64 = 0.95;

/// Plateau band and minimum tail length for the saturated QFI.
pub const PLATEAU_TOL: f64 = 0.05;
pub const PLATEAU_MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    #[serde(rename = "N")]
    N,
    T,
    Gamma,
    Delta,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::N => "N",
            SweepVariable::T => "t",
            SweepVariable::Gamma => "gamma",
            SweepVariable::Delta => "delta",
        }
    }
}

/// Parameters held fixed across a sweep; the swept one is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    #[serde(rename = "N")]
    pub n_spins: usize,
    /// Number of periods simulated.
    pub steps: u64,
    pub alpha: f64,
    /// Kick strength as a multiple of `pi j`, before `delta` is added.
    pub beta_pi_j: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub phi: f64,
    /// Dissipative substeps; `None` picks [`default_substeps`].
    pub substeps: Option<usize>,
    /// Multiplier applied to the substep count (convergence studies).
    #[serde(default = "one")]
    pub substep_factor: usize,
    /// Finite-difference ladder for echo methods; pure echo rescales it by
    /// `1 / (steps j)`.
    pub epsilons: Vec<f64>,
    /// Periods between checkpoints after the dense prefix.
    pub stride: u64,
    /// Lower end of the time-exponent fit range.
    pub fit_from: f64,
    /// Dissipative runs stop at [`saturation_horizon`] (capped by `steps`)
    /// instead of running exactly `steps` periods.
    #[serde(default)]
    pub auto_horizon: bool,
    /// Additional steps at which every trace is sampled.
    #[serde(default)]
    pub extra_checkpoints: Vec<u64>,
}

fn one() -> usize {
    1
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            n_spins: 20,
            steps: 100,
            alpha: PI / 2.0,
            beta_pi_j: 1.0,
            delta: 0.0,
            gamma: 0.0,
            theta: PI / 4.0,
            phi: PI / 4.0,
            substeps: None,
            substep_factor: 1,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            stride: 8,
            fit_from: 10.0,
            auto_horizon: false,
            extra_checkpoints: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub fixed: FixedParams,
    pub method: Method,
}

impl SweepSpec {
    /// Sorted copy; errors on empty, duplicate or invalid values.
    pub fn normalized(&self) -> Result<SweepSpec> {
        let mut values = self.values.clone();
        if values.is_empty() {
            return Err(QktError::InvalidParameter("sweep needs at least one value".into()));
        }
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(QktError::InvalidParameter("sweep values must be distinct".into()));
        }
        for &v in &values {
            let ok = match self.variable {
                SweepVariable::N => v >= 2.0 && v.fract() == 0.0 && (v as usize).is_multiple_of(2),
                SweepVariable::T => v >= 0.0 && v.fract() == 0.0,
                SweepVariable::Gamma => v >= 0.0,
                SweepVariable::Delta => v.is_finite(),
            };
            if !ok {
                return Err(QktError::InvalidParameter(format!(
                    "invalid {} value {v}",
                    self.variable.as_str()
                )));
            }
        }
        if self.method == Method::Dissipative && self.variable != SweepVariable::Gamma && self.fixed.gamma < 0.0 {
            return Err(QktError::InvalidParameter("gamma must be >= 0".into()));
        }
        Ok(SweepSpec {
            values,
            ..self.clone()
        })
    }

    /// Hex SHA-256 of the normalized spec and tool version.
    pub fn content_hash(&self) -> Result<String> {
        let norm = self.normalized()?;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&norm)?);
        h.update(TOOL_VERSION.as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// QFI at the last checkpoint (for `t` sweeps: at `t = value`).
    pub qfi: f64,
    pub peak_qfi: f64,
    /// First step reaching [`SATURATION_LEVEL`] of the maximum.
    pub t_max: Option<u64>,
    pub plateau: Option<Plateau>,
    /// Time exponent over `[fit_from, steps]`, when enough points exist.
    pub time_fit: Option<ScalingFit>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// Full traces keyed by the swept value (a single trace for `t` sweeps).
    pub traces: Vec<(f64, QfiTrace)>,
}

impl SweepTable {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn qfi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.qfi).collect()
    }

    /// Power law of the per-row QFI against the swept value.
    pub fn fit(&self, range: (f64, f64)) -> Result<ScalingFit> {
        fit_power_law(&self.values(), &self.qfi(), range)
    }

    /// Power law of the plateau level against the swept value.
    pub fn plateau_fit(&self) -> Result<ScalingFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in &self.rows {
            if let Some(p) = r.plateau {
                xs.push(r.value);
                ys.push(p.level);
            }
        }
        fit_power_law(&xs, &ys, (f64::NEG_INFINITY, f64::INFINITY))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            self.spec.variable.as_str(),
            "qfi",
            "peak_qfi",
            "t_max",
            "plateau_onset",
            "plateau_qfi",
            "time_exponent",
            "time_exponent_stderr",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.value.to_string(),
                r.qfi.to_string(),
                r.peak_qfi.to_string(),
                opt(r.t_max.map(|v| v.to_string())),
                opt(r.plateau.map(|p| p.onset.to_string())),
                opt(r.plateau.map(|p| p.level.to_string())),
                opt(r.time_fit.map(|f| f.exponent.to_string())),
                opt(r.time_fit.map(|f| f.exponent_stderr.to_string())),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Execution options that do not affect results.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            cache_dir: None,
        }
    }
}

/// `$QKT_CACHE_DIR`, else `.qkt-cache` in the working directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".qkt-cache"))
}

/// Concrete parameters of a single simulation.
#[derive(Debug, Clone)]
struct Point {
    n_spins: usize,
    steps: u64,
    delta: f64,
    gamma: f64,
    sample_at: Vec<u64>,
}

fn point_for(spec: &SweepSpec, value: f64) -> Point {
    let f = &spec.fixed;
    let mut p = Point {
        n_spins: f.n_spins,
        steps: f.steps,
        delta: f.delta,
        gamma: f.gamma,
        sample_at: f.extra_checkpoints.clone(),
    };
    match spec.variable {
        SweepVariable::N => p.n_spins = value as usize,
        SweepVariable::T => p.steps = value as u64,
        SweepVariable::Gamma => p.gamma = value,
        SweepVariable::Delta => p.delta = value,
    }
    if f.auto_horizon && spec.method == Method::Dissipative && spec.variable != SweepVariable::T {
        p.steps = saturation_horizon(p.gamma, p.n_spins, f.stride).min(f.steps);
    }
    p
}

/// Checkpoints: every step through 64, then every `stride` periods for
/// dissipative runs or log-spaced (aligned to `stride`) for pure runs.
pub fn schedule_for(method: Method, steps: u64, stride: u64) -> Vec<u64> {
    let stride = stride.max(1);
    match method {
        Method::Dissipative => {
            let mut v: Vec<u64> = (0..=steps.min(64)).collect();
            let mut s = 64 + stride;
            while s <= steps {
                v.push(s);
                s += stride;
            }
            if *v.last().unwrap() != steps {
                v.push(steps);
            }
            v
        }
        _ => checkpoints(steps, 64, 40, Some(stride)),
    }
}

fn simulate(spec: &SweepSpec, point: &Point) -> Result<QfiTrace> {
    let f = &spec.fixed;
    let sys = Arc::new(SpinSystem::new(point.n_spins)?);
    let beta = f.beta_pi_j * PI * sys.j() + point.delta;
    let op = FloquetOperator::new(sys.clone(), f.alpha, beta)?;
    let initial = CoherentStateParams::new(f.theta, f.phi);
    let mut cps = schedule_for(spec.method, point.steps, f.stride);
    cps.extend(point.sample_at.iter().copied().filter(|&s| s <= point.steps));
    cps.sort_unstable();
    cps.dedup();
    match spec.method {
        Method::PureExact => run_pure_exact(
            &op,
            &PureRun {
                initial,
                delta: point.delta,
                checkpoints: cps,
            },
        ),
        Method::PureEcho => run_pure_echo(
            &op,
            &PureRun {
                initial,
                delta: point.delta,
                checkpoints: cps,
            },
            &pure_echo_ladder(point.steps, sys.j()),
        ),
        Method::Dissipative => {
            let base = f.substeps.unwrap_or_else(|| default_substeps(point.gamma, point.n_spins));
            run_dissipative(
                &op,
                &DissipativeRun {
                    gamma: point.gamma,
                    substeps: base * f.substep_factor.max(1),
                    initial,
                    delta: point.delta,
                    epsilons: f.epsilons.clone(),
                    checkpoints: cps,
                },
            )
        }
    }
}

fn summarize(spec: &SweepSpec, value: f64, trace: &QfiTrace, qfi: f64, runtime_s: f64) -> SweepRow {
    let fit_range = (spec.fixed.fit_from, f64::INFINITY);
    let stride = spec.fixed.stride.max(1);
    let aligned = trace.subsample(stride);
    SweepRow {
        value,
        qfi,
        peak_qfi: trace.qfi.iter().cloned().fold(0.0, f64::max),
        t_max: detect_saturation(trace, SATURATION_LEVEL),
        plateau: detect_plateau(&aligned, PLATEAU_TOL, PLATEAU_MIN_POINTS),
        time_fit: fit_trace(&aligned, fit_range).ok(),
        runtime_s,
    }
}

fn execute(spec: &SweepSpec) -> Result<SweepTable> {
    let var = spec.variable;
    if var == SweepVariable::T {
        let max_t = *spec.values.last().unwrap() as u64;
        let mut point = point_for(spec, max_t as f64);
        point.sample_at.extend(spec.values.iter().map(|&v| v as u64));
        let start = Instant::now();
        let trace = simulate(spec, &point).map_err(|e| wrap(var, max_t as f64, e))?;
        let runtime = start.elapsed().as_secs_f64();
        let rows = spec
            .values
            .iter()
            .map(|&v| {
                let q = trace.at(v as u64).unwrap_or(0.0);
                summarize(spec, v, &trace, q, runtime)
            })
            .collect();
        return Ok(SweepTable {
            spec: spec.clone(),
            rows,
            traces: vec![(max_t as f64, trace)],
        });
    }

    let results: Vec<Result<(SweepRow, QfiTrace)>> = spec
        .values
        .par_iter()
        .map(|&v| {
            let start = Instant::now();
            let point = point_for(spec, v);
            let trace = simulate(spec, &point).map_err(|e| wrap(var, v, e))?;
            let q = trace.last().map(|(_, q)| q).unwrap_or(0.0);
            let row = summarize(spec, v, &trace, q, start.elapsed().as_secs_f64());
            Ok((row, trace))
        })
        .collect();
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (row, trace) = r?;
        traces.push((row.value, trace));
        rows.push(row);
    }
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
        traces,
    })
}

fn wrap(var: SweepVariable, value: f64, e: QktError) -> QktError {
    QktError::SweepPoint {
        variable: var.as_str().to_string(),
        value,
        source: Box::new(e),
    }
}

fn cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("sweep-{hash}.json"))
}

/// Run (or load from cache) a sweep. Rows are ordered by swept value
/// regardless of completion order.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepTable> {
    let norm = spec.normalized()?;
    let hash = norm.content_hash()?;
    if let Some(dir) = &opts.cache_dir {
        let p = cache_path(dir, &hash);
        if p.exists() {
            let text = std::fs::read_to_string(&p)?;
            match serde_json::from_str::<SweepTable>(&text) {
                Ok(t) if t.spec == norm => {
                    log::info!("sweep cache hit {}", p.display());
                    return Ok(t);
                }
                _ => log::warn!("ignoring stale cache entry {}", p.display()),
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| QktError::InvalidParameter(format!("thread pool: {e}")))?;
    let table = pool.install(|| execute(&norm))?;
    if let Some(dir) = &opts.cache_dir {
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".sweep-{hash}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&table)?)?;
        std::fs::rename(&tmp, cache_path(dir, &hash))?;
    }
    Ok(table)
}

/// Per-point runtimes and fit summaries written next to a sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub command: String,
    pub params: SweepSpec,
    pub tool_version: String,
    pub started_at: String,
    pub wall_time_s: f64,
    pub content_hash: String,
    pub point_runtimes_s: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, ScalingFit>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(values: Vec<f64>) -> SweepSpec {
        SweepSpec {
            variable: SweepVariable::N,
            values,
            fixed: FixedParams {
                steps: 40,
                ..FixedParams::default()
            },
            method: Method::PureExact,
        }
    }

    #[test]
    fn normalization_sorts_and_validates() {
        let s = spec(vec![8.0, 4.0, 6.0]).normalized().unwrap();
        assert_eq!(s.values, vec![4.0, 6.0, 8.0]);
        assert!(spec(vec![]).normalized().is_err());
        assert!(spec(vec![4.0, 4.0]).normalized().is_err());
        assert!(spec(vec![5.0]).normalized().is_err());
    }

    #[test]
    fn hash_ignores_order() {
        let a = spec(vec![4.0, 6.0]).content_hash().unwrap();
        let b = spec(vec![6.0, 4.0]).content_hash().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, spec(vec![4.0, 8.0]).content_hash().unwrap());
    }

    #[test]
    fn dissipative_schedule() {
        let s = schedule_for(Method::Dissipative, 100, 8);
        assert_eq!(s[..65], (0..=64).collect::<Vec<_>>()[..]);
        assert_eq!(&s[65..], &[72, 80, 88, 96, 100]);
    }

    #[test]
    fn failing_point_is_identified() {
        let mut s = spec(vec![4.0]);
        s.fixed.theta = f64::NAN;
        let err = run_sweep(&s, &SweepOptions::default()).unwrap_err();
        assert!(matches!(err, QktError::SweepPoint { value, .. } if value == 4.0));
    }
}
