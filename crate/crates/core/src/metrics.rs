//! Reconstruction quality metrics.

use ndarray::{s, Array2};

use crate::error::{invalid, Result};
use crate::grid::{mask_mean, PhaseGrid};
use crate::optics::wrap;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Percent.
    pub rel_error: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    /// Residues of the wrapped input, when supplied.
    pub residues: usize,
    pub runtime_ms: f64,
    pub warnings: Vec<String>,
}

fn check_pair(a: &PhaseGrid, b: &PhaseGrid) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return invalid("grids differ in size");
    }
    if a.mask != b.mask {
        return invalid("grids differ in aperture mask");
    }
    Ok(())
}

fn aligned(p: &PhaseGrid) -> Array2<f64> {
    let mu = mask_mean(&p.values, &p.mask);
    let mut v = p.values.clone();
    v.zip_mut_with(&p.mask, |x, &m| *x = if m { *x - mu } else { 0.0 });
    v
}

/// 100 * ||(rec - mean rec) - (truth - mean truth)|| / ||truth - mean truth||
/// over the aperture.
pub fn relative_error(rec: &PhaseGrid, truth: &PhaseGrid) -> Result<f64> {
    check_pair(rec, truth)?;
    let a = aligned(rec);
    let b = aligned(truth);
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, y), &m) in a.iter().zip(b.iter()).zip(truth.mask.iter()) {
        if m {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    if den == 0.0 {
        return invalid("truth has zero norm after piston removal");
    }
    Ok(100.0 * (num / den).sqrt())
}

fn gaussian_window() -> Array2<f64> {
    let w = SSIM_WINDOW;
    let c = (w / 2) as f64;
    let mut g = Array2::from_shape_fn((w, w), |(i, j)| {
        let (y, x) = (i as f64 - c, j as f64 - c);
        (-(x * x + y * y) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s = g.sum();
    g /= s;
    g
}

/// Mean SSIM and mean contrast-structure term with 'valid' Gaussian
/// filtering, for inputs already on a unit dynamic range.
fn ssim_terms(a: &Array2<f64>, b: &Array2<f64>) -> (f64, f64) {
    let (n0, n1) = a.dim();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let g = gaussian_window();
    let w = SSIM_WINDOW;
    let (mut ss, mut cs, mut cnt) = (0.0, 0.0, 0.0);
    for i in 0..=(n0 - w) {
        for j in 0..=(n1 - w) {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for p in 0..w {
                for q in 0..w {
                    let gw = g[[p, q]];
                    let x = a[[i + p, j + q]];
                    let y = b[[i + p, j + q]];
                    ma += gw * x;
                    mb += gw * y;
                    aa += gw * x * x;
                    bb += gw * y * y;
                    ab += gw * x * y;
                }
            }
            let va = aa - ma * ma;
            let vb = bb - mb * mb;
            let cov = ab - ma * mb;
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let c = (2.0 * cov + c2) / (va + vb + c2);
            ss += l * c;
            cs += c;
            cnt += 1.0;
        }
    }
    (ss / cnt, cs / cnt)
}

/// Whole-image SSIM used when the image is smaller than the window.
fn ssim_global(a: &Array2<f64>, b: &Array2<f64>) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    let c = (2.0 * cov + c2) / (va + vb + c2);
    (l * c, c)
}

/// Aligned, bounding-box-cropped inputs mapped affinely by the truth range.
fn prepared(rec: &PhaseGrid, truth: &PhaseGrid) -> Result<(Array2<f64>, Array2<f64>)> {
    check_pair(rec, truth)?;
    let a = aligned(rec);
    let b = aligned(truth);
    let mask = &truth.mask;
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((i, j), &m) in mask.indexed_iter() {
        if m {
            r0 = r0.min(i);
            r1 = r1.max(i);
            c0 = c0.min(j);
            c1 = c1.max(j);
            lo = lo.min(b[[i, j]]);
            hi = hi.max(b[[i, j]]);
        }
    }
    if r0 == usize::MAX {
        return invalid("empty aperture mask");
    }
    let range = if hi > lo { hi - lo } else { 1.0 };
    let map = |v: &Array2<f64>| v.slice(s![r0..=r1, c0..=c1]).mapv(|x| (x - lo) / range);
    Ok((map(&a), map(&b)))
}

/// SSIM of two frames already on a common unit dynamic range.
pub fn ssim_unit(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    if a.nrows() < SSIM_WINDOW || a.ncols() < SSIM_WINDOW {
        ssim_global(a, b).0
    } else {
        ssim_terms(a, b).0
    }
}

/// Gaussian-window SSIM over the aperture bounding box, with both frames
/// piston-aligned and scaled by the dynamic range of the truth.
pub fn ssim(rec: &PhaseGrid, truth: &PhaseGrid) -> Result<f64> {
    let (a, b) = prepared(rec, truth)?;
    Ok(ssim_unit(&a, &b))
}

fn downsample(a: &Array2<f64>) -> Array2<f64> {
    let (n0, n1) = (a.nrows() / 2, a.ncols() / 2);
    Array2::from_shape_fn((n0, n1), |(i, j)| 0.25 * (a[[2 * i, 2 * j]] + a[[2 * i + 1, 2 * j]] + a[[2 * i, 2 * j + 1]] + a[[2 * i + 1, 2 * j + 1]]))
}

/// Multi-scale SSIM; returns the value and how many scales were used.
/// Scales whose image is smaller than the window are dropped and the
/// remaining weights renormalised.
pub fn ms_ssim_scales(rec: &PhaseGrid, truth: &PhaseGrid) -> Result<(f64, usize)> {
    let (mut a, mut b) = prepared(rec, truth)?;
    let mut scales = 0;
    let mut dim = a.nrows().min(a.ncols());
    while scales < MS_SSIM_WEIGHTS.len() && dim >= SSIM_WINDOW {
        scales += 1;
        dim /= 2;
    }
    if scales == 0 {
        let v = ssim_global(&a, &b).0.clamp(0.0, 1.0);
        return Ok((v, 0));
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let mut out = 1.0;
    for k in 0..scales {
        let (ss, cs) = ssim_terms(&a, &b);
        let wgt = MS_SSIM_WEIGHTS[k] / wsum;
        let term = if k + 1 == scales { ss } else { cs };
        out *= term.max(0.0).powf(wgt);
        if k + 1 < scales {
            a = downsample(&a);
            b = downsample(&b);
        }
    }
    Ok((out.clamp(0.0, 1.0), scales))
}

pub fn ms_ssim(rec: &PhaseGrid, truth: &PhaseGrid) -> Result<f64> {
    Ok(ms_ssim_scales(rec, truth)?.0)
}

/// Number of 2 x 2 plaquettes (all four pixels in the aperture) whose loop
/// sum of wrapped differences is a non-zero multiple of 2 pi.
pub fn count_residues(pw: &PhaseGrid) -> usize {
    let v = &pw.values;
    let m = &pw.mask;
    let (n0, n1) = v.dim();
    let mut count = 0;
    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            if !(m[[i, j]] && m[[i, j + 1]] && m[[i + 1, j + 1]] && m[[i + 1, j]]) {
                continue;
            }
            let (a, b, c, d) = (v[[i, j]], v[[i, j + 1]], v[[i + 1, j + 1]], v[[i + 1, j]]);
            let loop_sum = wrap(b - a) + wrap(c - b) + wrap(d - c) + wrap(a - d);
            if loop_sum.abs() > std::f64::consts::PI {
                count += 1;
            }
        }
    }
    count
}

/// All metrics for one reconstruction.
pub fn evaluate(rec: &PhaseGrid, truth: &PhaseGrid, wrapped_input: Option<&PhaseGrid>, runtime_ms: f64) -> Result<MetricReport> {
    let rel_error = relative_error(rec, truth)?;
    let ssim_v = ssim(rec, truth)?;
    let (ms, scales) = ms_ssim_scales(rec, truth)?;
    let mut warnings = Vec::new();
    if scales < MS_SSIM_WEIGHTS.len() {
        warnings.push(format!("ms_ssim used {scales} of {} scales (grid too small for the window)", MS_SSIM_WEIGHTS.len()));
    }
    Ok(MetricReport {
        rel_error,
        ssim: ssim_v,
        ms_ssim: ms,
        residues: wrapped_input.map(count_residues).unwrap_or(0),
        runtime_ms,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{kolmogorov_screen, ScreenSpec};

    fn screen(seed: u64) -> PhaseGrid {
        kolmogorov_screen(&ScreenSpec::new(64, 3.0, seed)).unwrap()
    }

    #[test]
    fn relative_error_identities() {
        let t = screen(1);
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        let shifted = t.with_values(t.values.mapv(|v| v + 5.0));
        assert!(relative_error(&shifted, &t).unwrap() < 1e-12);
        let neg = t.with_values(t.values.mapv(|v| -v));
        assert!((relative_error(&neg, &t).unwrap() - 200.0).abs() < 1e-9);
        let zero = t.with_values(Array2::zeros((64, 64)));
        assert!(relative_error(&t, &zero).is_err());
    }

    #[test]
    fn ssim_properties() {
        let t = screen(2);
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((ms_ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg = t.with_values(t.values.mapv(|v| -v));
        assert!(ssim(&neg, &t).unwrap() < 0.1);
        let (a, b) = prepared(&screen(3), &t).unwrap();
        assert!((ssim_unit(&a, &b) - ssim_unit(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn residue_counts() {
        let t = screen(4);
        assert_eq!(count_residues(&t.with_values(t.values.mapv(|v| v * 0.01))), 0);
        let n = 16;
        let vortex = Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - 7.5).atan2(j as f64 - 7.5));
        assert_eq!(count_residues(&PhaseGrid::full(vortex).unwrap()), 1);
    }

    #[test]
    fn small_grid_ms_ssim_fallback() {
        let t = PhaseGrid::full(Array2::from_shape_fn((8, 8), |(i, j)| (i * j) as f64)).unwrap();
        let r = evaluate(&t, &t, None, 0.0).unwrap();
        assert!((r.ms_ssim - 1.0).abs() < 1e-12);
        assert!(!r.warnings.is_empty());
    }
}
