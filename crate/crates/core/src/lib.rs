//! Phase unwrapping with digital wavefront sensors.
//!
//! A wrapped phase only enters a sensor model through the phasor
//! `exp(i * phase)`, so simulated Shack-Hartmann and Fourier-type
//! (pyramid, roof, cone, iQuad) sensors see the wrapped and the unwrapped
//! phase identically. Reconstructing from their simulated measurements
//! therefore yields a smooth unwrapped phase. Classical unwrappers, a
//! turbulence screen generator and quality metrics are included for
//! comparison.

pub mod baselines;
pub mod config;
pub mod error;
pub mod fft;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod lsq;
pub mod metrics;
pub mod optics;
pub mod pipeline;
pub mod report;
pub mod sh;
pub mod sim;

pub use config::{Method, RunConfig};
pub use error::{DwfsError, Result};
pub use grid::{ApertureKind, ApertureSpec, ComplexField, PhaseGrid};
pub use metrics::MetricReport;
pub use report::UnwrapReport;
