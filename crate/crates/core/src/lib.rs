//! Quantum kicked top: Floquet propagation, quantum Fisher information of
//! pure and superradiantly damped states, Husimi phase-space diagnostics and
//! scaling analysis.

use blas_src as _;

pub mod analysis;
pub mod dissipative;
pub mod error;
pub mod floquet;
pub mod linalg;
pub mod phase_space;
pub mod pure;
pub mod reproduce;
pub mod spin;
pub mod trace;

pub use error::{QktError, Result};
pub use floquet::{build_floquet, check_recurrence, resonance_beta, FloquetOperator, RecurrenceResult};
pub use spin::{coherent_state, CoherentStateParams, SpinSystem};
pub use trace::{Method, QfiTrace, TraceParams};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
