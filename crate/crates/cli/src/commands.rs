use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use qkt_core::analysis::fit::{fit_trace, ScalingFit};
use qkt_core::analysis::sweep::{default_cache_dir, schedule_for, SweepOptions};
use qkt_core::linalg::inner;
use qkt_core::dissipative::{default_substeps, run_dissipative, DissipativeRun};
use qkt_core::phase_space::{count_peaks, husimi as husimi_grid, recurrence_fidelity, StateRef};
use qkt_core::pure::{pure_echo_ladder, run_pure_echo, run_pure_exact, PureRun, DEFAULT_EPSILONS};
use qkt_core::reproduce::{reproduce as run_figure, Figure, ReproduceOptions};
use qkt_core::trace::{QfiTrace, TOOL_VERSION};
use qkt_core::{
    check_recurrence, coherent_state, resonance_beta, CoherentStateParams, FloquetOperator, Method, SpinSystem,
};

use crate::expr;
use crate::{CliError, Global, HusimiArgs, QfiArgs, RecurrenceArgs, ReproduceArgs};

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse<T: FromStr>(name: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| bad(format!("--{name}: cannot parse '{v}'")))
}

fn list<T: FromStr>(name: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(name, s)).collect()
}

fn spin_count(v: Option<&str>) -> Result<usize, CliError> {
    let n: usize = parse("N", v.ok_or_else(|| bad("--N is required"))?)?;
    check_n(n)?;
    Ok(n)
}

fn check_n(n: usize) -> Result<(), CliError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(bad(format!("--N must be even and at least 2, got {n}")));
    }
    Ok(())
}

/// Evaluates expressions with `j` and `delta` bound.
struct Scope {
    j: f64,
    delta: f64,
}

impl Scope {
    fn eval(&self, name: &str, v: &str) -> Result<f64, CliError> {
        let vars = HashMap::from([("j", self.j), ("delta", self.delta)]);
        expr::eval(v, &vars).map_err(|e| bad(format!("--{name}: {e}")))
    }

    fn eval_or(&self, name: &str, v: Option<&str>, default: &str) -> Result<f64, CliError> {
        self.eval(name, v.unwrap_or(default))
    }
}

fn delta_of(v: Option<&str>) -> Result<f64, CliError> {
    match v {
        Some(d) => Scope { j: 0.0, delta: 0.0 }.eval("delta", d),
        None => Ok(0.0),
    }
}

fn out_dir(g: &Global) -> PathBuf {
    PathBuf::from(g.out.as_deref().unwrap_or("out"))
}

fn workers(g: &Global) -> Result<usize, CliError> {
    let w: usize = g.workers.as_deref().map(|w| parse("workers", w)).transpose()?.unwrap_or(1);
    if w == 0 {
        return Err(bad("--workers must be at least 1"));
    }
    Ok(w)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(File::create(path)?, v).map_err(|e| CliError::Core(e.into()))
}

#[derive(Serialize)]
struct Manifest<T: Serialize> {
    command: String,
    params: T,
    tool_version: &'static str,
    started_at: String,
    wall_time_s: f64,
}

fn manifest<T: Serialize>(command: &str, params: T, started_at: String, start: Instant) -> Manifest<T> {
    Manifest {
        command: command.to_string(),
        params,
        tool_version: TOOL_VERSION,
        started_at,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

#[derive(Serialize)]
struct RecurrenceReport {
    #[serde(rename = "N")]
    n_spins: usize,
    j: f64,
    alpha: f64,
    beta: f64,
    max_period: u32,
    tol: f64,
    found: bool,
    period: Option<u32>,
    residual: Option<f64>,
    global_phase: Option<[f64; 2]>,
}

pub fn recurrence(g: &Global, a: RecurrenceArgs) -> Result<(), CliError> {
    let started_at = now();
    let start = Instant::now();
    let n = spin_count(a.n.as_deref())?;
    let sys = Arc::new(SpinSystem::new(n)?);
    let scope = Scope { j: sys.j(), delta: 0.0 };
    let alpha = scope.eval_or("alpha", a.alpha.as_deref(), "pi/2")?;
    let beta = match (&a.resonance, &a.beta) {
        (Some(_), Some(_)) => return Err(bad("--beta and --resonance are exclusive")),
        (Some(rs), None) => {
            let parts: Vec<&str> = rs.split(['/', ',']).collect();
            if parts.len() != 2 {
                return Err(bad(format!("--resonance expects r/s, got '{rs}'")));
            }
            resonance_beta(sys.j(), parse("resonance", parts[0])?, parse("resonance", parts[1])?)
                .map_err(|e| bad(e.to_string()))?
        }
        (None, b) => scope.eval_or("beta", b.as_deref(), "pi*j")?,
    };
    let max_period: u32 = a.max_period.as_deref().map(|v| parse("max-period", v)).transpose()?.unwrap_or(100);
    let tol: f64 = a.tol.as_deref().map(|v| parse("tol", v)).transpose()?.unwrap_or(1e-8);
    if max_period == 0 || !(tol > 0.0) {
        return Err(bad("--max-period must be >= 1 and --tol > 0"));
    }
    let op = FloquetOperator::new(sys.clone(), alpha, beta)?;
    let found = check_recurrence(&op, max_period, tol);
    let report = RecurrenceReport {
        n_spins: n,
        j: sys.j(),
        alpha,
        beta,
        max_period,
        tol,
        found: found.is_some(),
        period: found.map(|r| r.period),
        residual: found.map(|r| r.residual),
        global_phase: found.map(|r| [r.global_phase.re, r.global_phase.im]),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    write_json(
        &out_dir(g).join("recurrence.json"),
        &manifest("recurrence", &report, started_at, start),
    )?;
    match found {
        Some(_) => Ok(()),
        None => Err(CliError::NoRecurrence(max_period)),
    }
}

#[derive(Serialize)]
struct QfiParams {
    #[serde(rename = "N")]
    n_spins: Vec<usize>,
    alpha: f64,
    beta_expr: String,
    delta: f64,
    theta: f64,
    phi: f64,
    method: Method,
    steps: u64,
    gamma: Option<f64>,
    substeps: Option<usize>,
    epsilons: Vec<f64>,
    stride: u64,
    fit_from: Option<f64>,
    workers: usize,
}

#[derive(Serialize)]
struct QfiResult {
    #[serde(rename = "N")]
    n_spins: usize,
    beta: f64,
    csv: String,
    final_qfi: Option<f64>,
    fit: Option<ScalingFit>,
}

pub fn qfi(g: &Global, a: QfiArgs) -> Result<(), CliError> {
    let started_at = now();
    let start = Instant::now();
    let ns: Vec<usize> = list("N", a.n.as_deref().ok_or_else(|| bad("--N is required"))?)?;
    if ns.is_empty() {
        return Err(bad("--N is required"));
    }
    for &n in &ns {
        check_n(n)?;
    }
    let method: Method = a
        .method
        .as_deref()
        .unwrap_or("pure-exact")
        .parse()
        .map_err(|e: String| bad(e))?;
    let delta = delta_of(a.delta.as_deref())?;
    let steps: u64 = a.steps.as_deref().map(|v| parse("steps", v)).transpose()?.unwrap_or(1000);
    let stride: u64 = a.stride.as_deref().map(|v| parse("stride", v)).transpose()?.unwrap_or(8);
    let gamma: Option<f64> = a.gamma.as_deref().map(|v| parse("gamma", v)).transpose()?;
    let substeps: Option<usize> = a.substeps.as_deref().map(|v| parse("substeps", v)).transpose()?;
    let epsilons: Vec<f64> = match a.epsilons.as_deref() {
        Some(e) => list("epsilons", e)?,
        None => DEFAULT_EPSILONS.to_vec(),
    };
    let fit_from: Option<f64> = match (a.fit, a.fit_from.as_deref()) {
        (_, Some(v)) => Some(parse("fit-from", v)?),
        (true, None) => Some(10.0),
        (false, None) => None,
    };
    if stride == 0 {
        return Err(bad("--stride must be >= 1"));
    }
    if let Some(gm) = gamma {
        if !(gm >= 0.0) {
            return Err(bad("--gamma must be >= 0"));
        }
    }
    if method == Method::Dissipative && gamma.is_none() {
        return Err(bad("--gamma is required for the dissipative method"));
    }
    if method != Method::PureExact {
        let mut sorted = epsilons.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.is_empty() || sorted.windows(2).any(|w| w[0] == w[1]) || sorted[0] <= 0.0 {
            return Err(bad("--epsilons must be distinct positive values"));
        }
    }
    if substeps == Some(0) {
        return Err(bad("--substeps must be >= 1"));
    }
    // Evaluate every expression up front so config errors never surface mid-run.
    let mut setups = Vec::new();
    for &n in &ns {
        let sys = Arc::new(SpinSystem::new(n)?);
        let scope = Scope { j: sys.j(), delta };
        let alpha = scope.eval_or("alpha", a.alpha.as_deref(), "pi/2")?;
        let beta = scope.eval_or("beta", a.beta.as_deref(), "pi*j+delta")?;
        let theta = scope.eval_or("theta", a.theta.as_deref(), "pi/4")?;
        let phi = scope.eval_or("phi", a.phi.as_deref(), "pi/4")?;
        setups.push((sys, alpha, beta, CoherentStateParams::new(theta, phi)));
    }
    let workers = workers(g)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| bad(e.to_string()))?;
    let cps = schedule_for(method, steps, stride);
    let traces: Vec<Result<QfiTrace, qkt_core::QktError>> = pool.install(|| {
        setups
            .par_iter()
            .map(|(sys, alpha, beta, initial)| {
                let op = FloquetOperator::new(sys.clone(), *alpha, *beta)?;
                let pure = PureRun {
                    initial: *initial,
                    delta,
                    checkpoints: cps.clone(),
                };
                match method {
                    Method::PureExact => run_pure_exact(&op, &pure),
                    Method::PureEcho => run_pure_echo(&op, &pure, &pure_echo_ladder(steps, sys.j())),
                    Method::Dissipative => {
                        let gm = gamma.unwrap_or(0.0);
                        run_dissipative(
                            &op,
                            &DissipativeRun {
                                gamma: gm,
                                substeps: substeps.unwrap_or_else(|| default_substeps(gm, sys.n_spins())),
                                initial: *initial,
                                delta,
                                epsilons: epsilons.clone(),
                                checkpoints: cps.clone(),
                            },
                        )
                    }
                }
            })
            .collect()
    });
    let dir = out_dir(g).join("qfi");
    let mut results = Vec::new();
    for ((sys, _, beta, _), trace) in setups.iter().zip(traces) {
        let trace = trace?;
        let fit = match fit_from {
            Some(lo) => match fit_trace(&trace.subsample(stride), (lo, f64::INFINITY)) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("N={}: no fit: {e}", sys.n_spins());
                    None
                }
            },
            None => None,
        };
        let stem = format!("N{}", sys.n_spins());
        let csv = trace.write_files(&dir, &stem, serde_json::json!({ "fit": fit }))?;
        results.push(QfiResult {
            n_spins: sys.n_spins(),
            beta: *beta,
            csv: csv.display().to_string(),
            final_qfi: trace.last().map(|(_, q)| q),
            fit,
        });
    }
    for r in &results {
        match &r.fit {
            Some(f) => println!(
                "N={:<5} final QFI {:.6e}  time exponent {:.4} +/- {:.4}",
                r.n_spins,
                r.final_qfi.unwrap_or(0.0),
                f.exponent,
                f.exponent_stderr
            ),
            None => println!("N={:<5} final QFI {:.6e}", r.n_spins, r.final_qfi.unwrap_or(0.0)),
        }
    }
    let params = QfiParams {
        n_spins: ns,
        alpha: setups[0].1,
        beta_expr: a.beta.clone().unwrap_or_else(|| "pi*j+delta".into()),
        delta,
        theta: setups[0].3.theta,
        phi: setups[0].3.phi,
        method,
        steps,
        gamma,
        substeps,
        epsilons,
        stride,
        fit_from,
        workers,
    };
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        config: &'a QfiParams,
        results: &'a [QfiResult],
    }
    write_json(
        &dir.join("manifest.json"),
        &manifest(
            "qfi",
            Out {
                config: &params,
                results: &results,
            },
            started_at,
            start,
        ),
    )
}

#[derive(Serialize)]
struct Snapshot {
    step: u64,
    peaks: usize,
    max: f64,
    argmax_theta: f64,
    argmax_phi: f64,
    normalization: f64,
    /// Exact `Q` at the initial direction, off-grid.
    q_at_initial: f64,
    fidelity_to_initial: f64,
    csv: String,
}

pub fn husimi(g: &Global, a: HusimiArgs) -> Result<(), CliError> {
    let started_at = now();
    let start = Instant::now();
    let n = spin_count(a.n.as_deref())?;
    let sys = Arc::new(SpinSystem::new(n)?);
    let delta = delta_of(a.delta.as_deref())?;
    let scope = Scope { j: sys.j(), delta };
    let alpha = scope.eval_or("alpha", a.alpha.as_deref(), "pi/2")?;
    let beta = scope.eval_or("beta", a.beta.as_deref(), "pi*j+delta")?;
    let theta = scope.eval_or("theta", a.theta.as_deref(), "pi/4")?;
    let phi = scope.eval_or("phi", a.phi.as_deref(), "pi/4")?;
    let mut snaps: Vec<u64> = list("snapshots", a.snapshots.as_deref().unwrap_or("0,3,6,8"))?;
    snaps.sort_unstable();
    snaps.dedup();
    let n_theta: usize = a.n_theta.as_deref().map(|v| parse("n-theta", v)).transpose()?.unwrap_or(128);
    let n_phi: usize = a.n_phi.as_deref().map(|v| parse("n-phi", v)).transpose()?.unwrap_or(256);
    let threshold: f64 = a.threshold.as_deref().map(|v| parse("threshold", v)).transpose()?.unwrap_or(0.5);
    if n_theta < 8 || n_phi < 8 {
        return Err(bad("grid sizes must be at least 8"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(bad("--threshold must lie in (0, 1)"));
    }
    let op = FloquetOperator::new(sys.clone(), alpha, beta)?;
    let initial = CoherentStateParams::new(theta, phi);
    let psi0 = coherent_state(&sys, initial)?;
    let dir = out_dir(g).join("husimi");
    std::fs::create_dir_all(&dir)?;
    let mut psi = psi0.clone();
    let mut step = 0;
    let mut out = Vec::new();
    for &s in &snaps {
        while step < s {
            psi = op.apply(&psi);
            step += 1;
        }
        let grid = husimi_grid(&sys, StateRef::Pure(&psi), n_theta, n_phi)?;
        let path = dir.join(format!("husimi_t{s}.csv"));
        grid.write_csv(File::create(&path)?)?;
        let (ia, ib) = grid.argmax();
        let snap = Snapshot {
            step: s,
            peaks: count_peaks(&grid, threshold)?,
            max: grid.max(),
            argmax_theta: grid.thetas[ia],
            argmax_phi: grid.phis[ib],
            normalization: grid.normalization(sys.j()),
            q_at_initial: inner(psi0.view(), psi.view()).norm_sqr(),
            fidelity_to_initial: recurrence_fidelity(&psi0, &psi)?,
            csv: path.display().to_string(),
        };
        println!(
            "t={:<6} peaks {:<3} max {:.6}  fidelity to initial {:.12}",
            snap.step, snap.peaks, snap.max, snap.fidelity_to_initial
        );
        out.push(snap);
    }
    let params = serde_json::json!({
        "N": n, "alpha": alpha, "beta": beta, "delta": delta, "theta": initial.theta, "phi": initial.phi,
        "snapshots": snaps, "n_theta": n_theta, "n_phi": n_phi, "threshold": threshold, "summary": out,
    });
    write_json(&dir.join("summary.json"), &manifest("husimi", params, started_at, start))
}

pub fn reproduce(g: &Global, a: ReproduceArgs) -> Result<(), CliError> {
    let fig: Figure = a
        .figure
        .as_deref()
        .ok_or_else(|| bad("figure id required"))?
        .parse()
        .map_err(|e: qkt_core::QktError| bad(e.to_string()))?;
    if fig.needs_desk_scale() && !a.desk_scale {
        return Err(bad(format!("{} requires --desk-scale", fig.as_str())));
    }
    let opts = ReproduceOptions {
        desk_scale: a.desk_scale,
        sweep: SweepOptions {
            workers: workers(g)?,
            cache_dir: if g.no_cache { None } else { Some(default_cache_dir()) },
        },
    };
    let (dir, summary) = run_figure(fig, &out_dir(g), &opts)?;
    print!("{}", summary.render());
    println!("\nbundle written to {}", dir.display());
    let failed = summary.checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
