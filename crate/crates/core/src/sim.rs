//! Turbulence-like phase screens and the additive noise model.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::fft::Dft2;
use crate::grid::{PhaseGrid, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenSpec {
    pub n: usize,
    /// Fried-parameter analogue in pixels; smaller is stronger.
    pub r0_px: f64,
    pub seed: u64,
    /// Von Karman outer scale in pixels; `f64::INFINITY` gives pure Kolmogorov.
    pub outer_scale_px: f64,
}

impl ScreenSpec {
    /// Outer scale defaults to n pixels.
    pub fn new(n: usize, r0_px: f64, seed: u64) -> Self {
        Self { n, r0_px, seed, outer_scale_px: n as f64 }
    }
}

/// FFT screen: complex white noise shaped by sqrt of
/// 0.023 r0^(-5/3) (f^2 + L0^-2)^(-11/6), f in cycles per pixel, DC removed;
/// the real part is taken and its mean subtracted. Full-aperture mask.
pub fn kolmogorov_screen(spec: &ScreenSpec) -> Result<PhaseGrid> {
    let n = spec.n;
    if n < 4 || n % 2 != 0 {
        return invalid("screen size must be even and >= 4");
    }
    if !(spec.r0_px > 0.0) {
        return invalid("r0_px must be > 0");
    }
    if !(spec.outer_scale_px > 0.0) {
        return invalid("outer scale must be > 0");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let inv_l0 = if spec.outer_scale_px.is_finite() { 1.0 / spec.outer_scale_px } else { 0.0 };
    let amp = 0.023 * spec.r0_px.powf(-5.0 / 3.0);
    // Coefficients are laid out on the centred frequency grid used by `Dft2`.
    let h = (n / 2) as f64;
    let mut w = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            // centred index -> frequency
            let fy = (i as f64 - h) / n as f64;
            let fx = (j as f64 - h) / n as f64;
            let f2 = fx * fx + fy * fy;
            let psd = if i == n / 2 && j == n / 2 { 0.0 } else { amp * (f2 + inv_l0 * inv_l0).powf(-11.0 / 6.0) };
            w[[i, j]] = C64::new(re, im) * psd.sqrt();
        }
    }
    // The 1/n of the unitary transform is the frequency step 1/n.
    Dft2::cached(n).forward(&mut w);
    let mut v = w.mapv(|z| z.re);
    let mean = v.mean().unwrap_or(0.0);
    v.mapv_inplace(|x| x - mean);
    PhaseGrid::full(v)
}

fn rms_in_mask(pw: &PhaseGrid) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for (v, &m) in pw.values.iter().zip(pw.mask.iter()) {
        if m {
            s += v * v;
            k += 1;
        }
    }
    if k == 0 {
        0.0
    } else {
        (s / k as f64).sqrt()
    }
}

/// Add u * level * rms(pw) with u ~ U[-1, 1] independently at every aperture
/// pixel. The result is not re-wrapped.
pub fn apply_noise(pw: &PhaseGrid, level: f64, seed: u64) -> Result<PhaseGrid> {
    if !(level >= 0.0) {
        return invalid("noise level must be >= 0");
    }
    let scale = level * rms_in_mask(pw);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut v = pw.values.clone();
    for (x, &m) in v.iter_mut().zip(pw.mask.iter()) {
        let u: f64 = rng.random_range(-1.0..=1.0);
        if m && scale > 0.0 {
            *x += u * scale;
        }
    }
    Ok(pw.with_values(v))
}
