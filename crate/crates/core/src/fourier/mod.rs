//! Digital Fourier-type wavefront sensors and their reconstructors.

pub mod linear;
pub mod nope;
pub mod sensor;
pub mod shape;

use std::time::Instant;

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::grid::{remove_piston, PhaseGrid};
use crate::report::UnwrapReport;

pub use linear::{linear_reconstruct_p4, refine_tilt, LinearOptions, LinearResult, P4Linear};
pub use nope::{nonlinear_solve, LineSearch, NopeOptions, NopeResult, Start};
pub use sensor::{modulated_intensity, sensor_intensity, FourierSensor, ModulationSpec};
pub use shape::{eval_shape, ShapeFunction, ShapeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Nonlinear,
}

/// Sensor choice for the Fourier pipeline; `Roof` averages the x- and
/// y-roof reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierKind {
    Shape(ShapeKind),
    Roof,
}

impl std::str::FromStr for FourierKind {
    type Err = crate::error::DwfsError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "roof" {
            Ok(FourierKind::Roof)
        } else {
            Ok(FourierKind::Shape(s.parse()?))
        }
    }
}

impl std::fmt::Display for FourierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FourierKind::Roof => f.write_str("roof"),
            FourierKind::Shape(k) => f.write_str(k.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierOptions {
    pub c: f64,
    /// Focal grid size as a multiple of N.
    pub padding: usize,
    pub modulation: Option<ModulationSpec>,
    pub nope: NopeOptions,
    pub linear: LinearOptions,
}

impl Default for FourierOptions {
    fn default() -> Self {
        Self { c: 1.0, padding: 4, modulation: None, nope: NopeOptions::default(), linear: LinearOptions::default() }
    }
}

/// Fourier-type sensor unwrapping: simulate the sensor on the wrapped
/// phase, then reconstruct.
pub fn unwrap_fourier(pw: &PhaseGrid, kind: FourierKind, mode: Mode, opts: &FourierOptions) -> Result<UnwrapReport> {
    let t = Instant::now();
    let mut rep = match kind {
        FourierKind::Roof => {
            if mode == Mode::Linear {
                return invalid("linear mode requires pyramid4");
            }
            let a = unwrap_shape(pw, ShapeKind::RoofX, mode, opts)?;
            let b = unwrap_shape(pw, ShapeKind::RoofY, mode, opts)?;
            let mut v = (&a.phase.values + &b.phase.values) * 0.5;
            remove_piston(&mut v, &pw.mask);
            let mut rep = UnwrapReport::new("fourier:roof", pw.with_values(v));
            rep.iterations = a.iterations + b.iterations;
            rep.converged = a.converged && b.converged;
            rep.history = a.history;
            rep.warnings = a.warnings.into_iter().chain(b.warnings).collect();
            rep.diagnostics.insert("objective_x".into(), a.diagnostics.get("objective").copied().unwrap_or(f64::NAN));
            rep.diagnostics.insert("objective_y".into(), b.diagnostics.get("objective").copied().unwrap_or(f64::NAN));
            rep
        }
        FourierKind::Shape(k) => unwrap_shape(pw, k, mode, opts)?,
    };
    rep.runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(rep)
}

fn unwrap_shape(pw: &PhaseGrid, kind: ShapeKind, mode: Mode, opts: &FourierOptions) -> Result<UnwrapReport> {
    let n = pw.n();
    let needs_linear = mode == Mode::Linear || opts.nope.start == Start::Linear;
    if needs_linear && kind != ShapeKind::Pyramid4 {
        return invalid(format!("linear reconstruction and linear starting require pyramid4, got {kind}"));
    }
    let method = match (mode, kind) {
        (Mode::Linear, _) => "p4_linear".to_string(),
        (Mode::Nonlinear, ShapeKind::Pyramid4) => "p4_nope".to_string(),
        (Mode::Nonlinear, k) => format!("fourier:{k}"),
    };
    let mut report;
    if needs_linear {
        let lin = P4Linear::calibrate(&pw.mask, opts.c, opts.padding, opts.modulation)?;
        let data = lin.sensor.intensity(&pw.values);
        let lr = lin.reconstruct(&data, &opts.linear)?;
        if mode == Mode::Linear {
            report = UnwrapReport::new(method, lr.phase);
            report.diagnostics.insert("objective".into(), lr.objective);
        } else {
            // Beyond the quad-cell range a pure global tilt can explain the
            // data better than the linear estimate; start from the better one.
            let tilt = refine_tilt(&lin.sensor, &Array2::zeros((n, n)), &data);
            let jt = lin.sensor.objective(&tilt, &data);
            let start = if jt < lr.objective { tilt } else { lr.phase.values.clone() };
            let nr = nonlinear_solve(&lin.sensor, &data, &start, &opts.nope);
            report = finish_nope(method, pw, nr);
            report.diagnostics.insert("linear_objective".into(), lr.objective);
            report.diagnostics.insert("tilt_objective".into(), jt);
        }
        report.diagnostics.insert("calibration".into(), lr.calibration);
        report.diagnostics.insert("optical_gain".into(), lr.optical_gain);
    } else {
        let sensor = FourierSensor::new(&pw.mask, ShapeFunction::new(kind, opts.c), opts.padding, opts.modulation)?;
        let data = sensor.intensity(&pw.values);
        let nr = nonlinear_solve(&sensor, &data, &Array2::zeros((n, n)), &opts.nope);
        report = finish_nope(method, pw, nr);
    }
    if kind == ShapeKind::Iquad {
        report.warnings.push("low confidence: iquad reconstructions suffer from non-uniqueness artefacts".into());
    }
    Ok(report)
}

fn finish_nope(method: String, pw: &PhaseGrid, nr: NopeResult) -> UnwrapReport {
    let mut v = nr.phase;
    remove_piston(&mut v, &pw.mask);
    let mut rep = UnwrapReport::new(method, pw.with_values(v));
    rep.iterations = nr.iterations;
    rep.converged = nr.converged;
    rep.diagnostics.insert("objective".into(), *nr.history.last().unwrap_or(&f64::NAN));
    rep.history = nr.history;
    if let Some(w) = nr.warning {
        rep.warnings.push(w);
    }
    rep
}
