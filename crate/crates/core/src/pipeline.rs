//! Method dispatch and the benchmark protocol.

use std::time::Instant;

use crate::baselines::{unwrap_columnwise_in, unwrap_mrp_in, unwrap_pe_in};
use crate::config::{Method, RunConfig};
use crate::error::Result;
use crate::fourier::{unwrap_fourier, FourierKind, Mode, ShapeKind};
use crate::grid::{ApertureSpec, PhaseGrid};
use crate::optics::wrap_phase;
use crate::report::UnwrapReport;
use crate::sh::unwrap_sh;
use crate::sim::{apply_noise, kolmogorov_screen, ScreenSpec};

/// Run the configured method on a (possibly noisy) wrapped phase.
pub fn run_method(pw: &PhaseGrid, cfg: &RunConfig) -> Result<UnwrapReport> {
    cfg.validate()?;
    cfg.check_grid(pw.n())?;
    let t = Instant::now();
    let mut rep = match cfg.method {
        Method::Sh => unwrap_sh(pw, cfg.n_sub.unwrap_or(pw.n() / 8))?,
        Method::P4Linear => unwrap_fourier(pw, FourierKind::Shape(ShapeKind::Pyramid4), Mode::Linear, &cfg.fourier_options())?,
        Method::P4Nope => unwrap_fourier(pw, FourierKind::Shape(ShapeKind::Pyramid4), Mode::Nonlinear, &cfg.fourier_options())?,
        Method::Fourier(k) => unwrap_fourier(pw, k, Mode::Nonlinear, &cfg.fourier_options())?,
        Method::Columnwise => UnwrapReport::new("columnwise", unwrap_columnwise_in(pw, cfg.domain)),
        Method::Mrp => UnwrapReport::new("mrp", unwrap_mrp_in(pw, cfg.domain)),
        Method::Pe => UnwrapReport::new("pe", unwrap_pe_in(pw, cfg.domain)),
    };
    rep.method = cfg.method.to_string();
    rep.runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(rep)
}

/// Benchmark protocol: Kolmogorov screen on a disc aperture spanning the
/// grid, wrapped, then 20% RMS-relative uniform noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub n: usize,
    pub r0_px: f64,
    pub noise: f64,
}

pub const PROTOCOL: Protocol = Protocol { n: 128, r0_px: 2.5, noise: 0.2 };

/// Ground truth, wrapped phase and noisy wrapped phase for one seed.
#[derive(Debug, Clone)]
pub struct Case {
    pub truth: PhaseGrid,
    pub wrapped: PhaseGrid,
    pub noisy: PhaseGrid,
}

impl Protocol {
    pub fn case(&self, seed: u64) -> Result<Case> {
        let screen = kolmogorov_screen(&ScreenSpec::new(self.n, self.r0_px, seed))?;
        let mask = ApertureSpec::disc(self.n).mask(self.n)?;
        let truth = PhaseGrid::new(screen.values, mask)?.masked();
        let wrapped = wrap_phase(&truth)?;
        let noisy = apply_noise(&wrapped, self.noise, seed)?;
        Ok(Case { truth, wrapped, noisy })
    }
}
