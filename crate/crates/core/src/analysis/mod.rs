//! Scaling fits, saturation detection and parameter sweeps.

pub mod fit;
pub mod sweep;

pub use fit::{detect_plateau, detect_saturation, fit_power_law, fit_trace, Plateau, ScalingFit};
pub use sweep::{run_sweep, FixedParams, SweepOptions, SweepRow, SweepSpec, SweepTable, SweepVariable};
