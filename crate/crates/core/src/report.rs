use std::collections::BTreeMap;

use ndarray::Array2;

use crate::grid::PhaseGrid;

/// Reconstructed phase plus diagnostics.
#[derive(Debug, Clone)]
pub struct UnwrapReport {
    pub phase: PhaseGrid,
    pub method: String,
    pub iterations: usize,
    /// Per-iteration objective values for iterative methods.
    pub history: Vec<f64>,
    pub converged: bool,
    pub runtime_ms: f64,
    pub warnings: Vec<String>,
    /// Scalar diagnostics (calibration gains, solver residuals, ...).
    pub diagnostics: BTreeMap<String, f64>,
    /// Per-subaperture RMS slope residuals of the Shack-Hartmann integrator.
    pub slope_residuals: Option<Array2<f64>>,
}

impl UnwrapReport {
    pub fn new(method: impl Into<String>, phase: PhaseGrid) -> Self {
        Self {
            phase,
            method: method.into(),
            iterations: 0,
            history: Vec::new(),
            converged: true,
            runtime_ms: 0.0,
            warnings: Vec::new(),
            diagnostics: BTreeMap::new(),
            slope_residuals: None,
        }
    }
}
