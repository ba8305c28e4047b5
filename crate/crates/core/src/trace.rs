//! QFI time series and their on-disk form.
//!
//! A trace is written as `<stem>.csv` with columns `step,t,qfi` (dissipative
//! runs append `gamma,substeps,trace_error,min_eigenvalue`) plus a
//! `<stem>.json` metadata sidecar.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PureExact,
    PureEcho,
    Dissipative,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::PureExact => "pure-exact",
            Method::PureEcho => "pure-echo",
            Method::Dissipative => "dissipative",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pure-exact" => Ok(Method::PureExact),
            "pure-echo" => Ok(Method::PureEcho),
            "dissipative" => Ok(Method::Dissipative),
            other => Err(format!("unknown method '{other}' (pure-exact | pure-echo | dissipative)")),
        }
    }
}

/// Physical parameters a trace was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    #[serde(rename = "N")]
    pub n_spins: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
    pub phi: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    /// Finite-difference ladder for echo-based methods.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
}

/// Per-checkpoint integrity diagnostics of a dissipative run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    /// `|tr(rho) - 1|` before the per-period renormalization.
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfiTrace {
    pub steps: Vec<u64>,
    pub qfi: Vec<f64>,
    pub params: TraceParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<DensityDiagnostics>,
}

impl QfiTrace {
    pub fn new(params: TraceParams) -> Self {
        Self {
            steps: Vec::new(),
            qfi: Vec::new(),
            params,
            diagnostics: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u64, qfi: f64) {
        self.steps.push(step);
        self.qfi.push(qfi);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// QFI at an exact step, if it was recorded.
    pub fn at(&self, step: u64) -> Option<f64> {
        self.steps.binary_search(&step).ok().map(|i| self.qfi[i])
    }

    pub fn last(&self) -> Option<(u64, f64)> {
        Some((*self.steps.last()?, *self.qfi.last()?))
    }

    /// Restrict to steps that are multiples of `stride` (step 0 kept).
    pub fn subsample(&self, stride: u64) -> QfiTrace {
        let mut out = QfiTrace::new(self.params.clone());
        for (i, (&s, &q)) in self.steps.iter().zip(self.qfi.iter()).enumerate() {
            if s % stride == 0 {
                out.push(s, q);
                if let Some(d) = self.diagnostics.get(i) {
                    out.diagnostics.push(*d);
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let period_t = 1.0;
        let dissipative = self.params.method == Method::Dissipative;
        if dissipative {
            wtr.write_record(["step", "t", "qfi", "gamma", "substeps", "trace_error", "min_eigenvalue"])?;
        } else {
            wtr.write_record(["step", "t", "qfi"])?;
        }
        for (i, (&s, &q)) in self.steps.iter().zip(self.qfi.iter()).enumerate() {
            let mut rec = vec![s.to_string(), (s as f64 * period_t).to_string(), q.to_string()];
            if dissipative {
                let d = self.diagnostics.get(i).copied().unwrap_or(DensityDiagnostics {
                    trace_error: 0.0,
                    min_eigenvalue: 0.0,
                });
                rec.push(self.params.gamma.unwrap_or(0.0).to_string());
                rec.push(self.params.substeps.unwrap_or(0).to_string());
                rec.push(d.trace_error.to_string());
                rec.push(d.min_eigenvalue.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Write `<dir>/<stem>.csv` and `<dir>/<stem>.json`; returns the CSV path.
    pub fn write_files(&self, dir: &Path, stem: &str, extra: serde_json::Value) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        self.write_csv(File::create(&csv_path)?)?;
        let meta = TraceMetadata {
            params: self.params.clone(),
            n_rows: self.len(),
            tool_version: TOOL_VERSION.to_string(),
            extra,
        };
        let f = File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(f, &meta)?;
        Ok(csv_path)
    }

    pub fn read_csv<R: std::io::Read>(r: R, params: TraceParams) -> Result<QfiTrace> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut out = QfiTrace::new(params);
        for rec in rdr.records() {
            let rec = rec?;
            let step: u64 = rec[0].parse().map_err(|e| {
                crate::error::QktError::InvalidParameter(format!("bad step column: {e}"))
            })?;
            let qfi: f64 = rec[2].parse().map_err(|e| {
                crate::error::QktError::InvalidParameter(format!("bad qfi column: {e}"))
            })?;
            out.push(step, qfi);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(flatten)]
    pub params: TraceParams,
    pub n_rows: usize,
    pub tool_version: String,
    /// Method tolerances and anything else the producer wants recorded.
    pub extra: serde_json::Value,
}

/// Checkpoint schedule: every step up to `dense_until`, then `per_decade`
/// log-spaced steps up to `max_step` (always included). With `align`, the
/// log-spaced steps are rounded to multiples of it.
pub fn checkpoints(max_step: u64, dense_until: u64, per_decade: usize, align: Option<u64>) -> Vec<u64> {
    let mut out: Vec<u64> = (0..=dense_until.min(max_step)).collect();
    if max_step > dense_until && per_decade > 0 {
        let start = (dense_until.max(1)) as f64;
        let decades = (max_step as f64 / start).log10();
        let n = (decades * per_decade as f64).ceil() as usize;
        for i in 1..=n {
            let x = start * 10f64.powf(i as f64 / per_decade as f64);
            let mut s = x.round() as u64;
            if let Some(a) = align {
                s = ((s + a / 2) / a) * a;
            }
            if s > dense_until && s <= max_step {
                out.push(s);
            }
        }
        out.push(max_step);
    }
    out.sort_unstable();
    out.dedup();
    out
}
