//! Linear (quad-cell) reconstructor for the four-sided pyramid.
//!
//! The four pupil images are located on the flat-wavefront calibration
//! frame, slope signals are formed from their normalised differences, a
//! small tilt fixes the signal-to-gradient factor and the gradients are
//! integrated on the pixel grid. For large aberrations the sensor response
//! saturates, so the reconstruction is by default rescaled by the factor
//! that best explains the measured intensity through the forward model.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::fourier::sensor::{aperture_diameter, FourierSensor, ModulationSpec};
use crate::fourier::shape::{ShapeFunction, ShapeKind};
use crate::grid::{remove_piston, PhaseGrid};
use crate::lsq::{default_max_iters, integrate_differences, CG_TOL};

/// Probe tilt amplitude (radians, peak over the aperture).
pub const PROBE_PEAK: f64 = 0.1;

/// Tikhonov weight of the per-pixel calibration inverse, relative to the
/// mean squared response.
pub const CAL_REG: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    /// Rescale the reconstruction to minimise the intensity mismatch.
    pub gain_compensation: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { gain_compensation: true }
    }
}

#[derive(Debug, Clone)]
pub struct LinearResult {
    pub phase: PhaseGrid,
    /// Calibrated radians-per-pixel per unit slope signal.
    pub calibration: f64,
    /// Multiplicative gain applied after integration (1 without compensation).
    pub optical_gain: f64,
    /// Objective of the returned phase.
    pub objective: f64,
}

/// Calibrated quad-cell reconstructor.
pub struct P4Linear {
    pub sensor: FourierSensor,
    /// Pupil image displacements (rows, cols) for quadrants 1..4 with
    /// quadrant signs (+x,+y), (-x,+y), (-x,-y), (+x,-y).
    pub offsets: [(f64, f64); 4],
    pub calibration: f64,
    /// Per-pixel inverse response: gx = g0 Sx + g1 Sy, gy = g2 Sx + g3 Sy.
    gains: [Array2<f64>; 4],
    reference: (Array2<f64>, Array2<f64>),
    centre: (f64, f64),
}

fn quadrant(dy: f64, dx: f64) -> usize {
    match (dx > 0.0, dy > 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

fn bilinear(img: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (n0, n1) = img.dim();
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    let at = |a: f64, b: f64| -> f64 {
        if a < 0.0 || b < 0.0 || a >= n0 as f64 || b >= n1 as f64 {
            0.0
        } else {
            img[[a as usize, b as usize]]
        }
    };
    (at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1.0) * tx) * (1.0 - ty) + (at(y0 + 1.0, x0) * (1.0 - tx) + at(y0 + 1.0, x0 + 1.0) * tx) * ty
}

impl P4Linear {
    pub fn calibrate(mask: &Array2<bool>, c: f64, padding: usize, modulation: Option<ModulationSpec>) -> Result<Self> {
        let sensor = FourierSensor::new(mask, ShapeFunction::new(ShapeKind::Pyramid4, c), padding, modulation)?;
        let n = sensor.n;
        let flat = sensor.intensity(&Array2::zeros((n, n)));
        let count = mask.iter().filter(|&&b| b).count() as f64;
        // aperture centre inside the focal grid
        let (mut my, mut mx) = (0.0, 0.0);
        for ((i, j), &m) in mask.indexed_iter() {
            if m {
                my += i as f64;
                mx += j as f64;
            }
        }
        let centre = (my / count + sensor.offset as f64, mx / count + sensor.offset as f64);
        // Power-weighted centroid of each quadrant about the centre.
        let mut acc = [(0.0, 0.0, 0.0); 4];
        for ((i, j), &v) in flat.indexed_iter() {
            let (dy, dx) = (i as f64 - centre.0, j as f64 - centre.1);
            if dy == 0.0 || dx == 0.0 {
                continue;
            }
            let q = quadrant(dy, dx);
            acc[q].0 += v;
            acc[q].1 += v * dy;
            acc[q].2 += v * dx;
        }
        let shift = c * sensor.m as f64 / (2.0 * PI);
        let mut offsets = [(0.0, 0.0); 4];
        let mut filled = [false; 4];
        for (q, &(w, sy, sx)) in acc.iter().enumerate() {
            // The flat frame fixes which way each image moved; the distance is
            // the shift theorem displacement c M / (2 pi) along both axes,
            // since edge diffraction biases intensity centroids inward.
            if w > 0.05 * count {
                offsets[q] = (shift * (sy / w).signum(), shift * (sx / w).signum());
                filled[q] = true;
            }
        }
        if filled.iter().any(|f| !f) {
            return invalid("could not register four pupil images in distinct quadrants");
        }
        // Pupil images must not overlap each other.
        let d = aperture_diameter(mask);
        if offsets.iter().any(|o| o.0.abs() < d / 2.0 || o.1.abs() < d / 2.0) {
            return invalid("pupil images overlap: increase c or the padding (smaller pupil fraction)");
        }
        let z = || Array2::zeros((n, n));
        let mut me = Self { sensor, offsets, calibration: 1.0, gains: [z(), z(), z(), z()], reference: (Array2::zeros((n, n)), Array2::zeros((n, n))), centre };
        me.reference = me.signals(&flat);

        let r = (d - 1.0).max(1.0) / 2.0;
        let cj = (n as f64 - 1.0) / 2.0;
        let slope = PROBE_PEAK / r;
        let probe_x = Array2::from_shape_fn((n, n), |(_, j)| slope * (j as f64 - cj));
        let probe_y = probe_x.t().to_owned();
        let (xx, xy) = me.signals(&me.sensor.intensity(&probe_x));
        let (yx, yy) = me.signals(&me.sensor.intensity(&probe_y));
        let (rx, ry) = (&me.reference.0, &me.reference.1);
        // Per-pixel response matrix A = [[dSx/dgx, dSx/dgy], [dSy/dgx, dSy/dgy]].
        let a = [(&xx - rx) / slope, (&yx - rx) / slope, (&xy - ry) / slope, (&yy - ry) / slope];
        let (mut num, mut den, mut tr) = (0.0, 0.0, 0.0);
        for ((i, j), &m) in mask.indexed_iter() {
            if m {
                let p = [a[0][[i, j]], a[1][[i, j]], a[2][[i, j]], a[3][[i, j]]];
                num += p[0] + p[3];
                den += p[0] * p[0] + p[3] * p[3];
                tr += p.iter().map(|v| v * v).sum::<f64>();
            }
        }
        if !(den > 0.0) {
            return invalid("degenerate calibration response");
        }
        me.calibration = num / den;
        // Regularised per-pixel inverse (A^T A + lambda I)^-1 A^T.
        let lambda = CAL_REG * tr / (2.0 * count);
        let mut g = [Array2::zeros((n, n)), Array2::zeros((n, n)), Array2::zeros((n, n)), Array2::zeros((n, n))];
        for ((i, j), &m) in mask.indexed_iter() {
            if !m {
                continue;
            }
            let (p, q, u, v) = (a[0][[i, j]], a[1][[i, j]], a[2][[i, j]], a[3][[i, j]]);
            // A = [[p, q], [u, v]]
            let (n00, n01, n11) = (p * p + u * u + lambda, p * q + u * v, q * q + v * v + lambda);
            let det = n00 * n11 - n01 * n01;
            let (i00, i01, i11) = (n11 / det, -n01 / det, n00 / det);
            g[0][[i, j]] = i00 * p + i01 * q;
            g[1][[i, j]] = i00 * u + i01 * v;
            g[2][[i, j]] = i01 * p + i11 * q;
            g[3][[i, j]] = i01 * u + i11 * v;
        }
        me.gains = g;
        Ok(me)
    }

    /// Normalised slope signals on the pupil grid.
    pub fn signals(&self, img: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let n = self.sensor.n;
        let o = self.sensor.offset as f64;
        let mask = &self.sensor.mask;
        let mut q = [Array2::<f64>::zeros((n, n)), Array2::zeros((n, n)), Array2::zeros((n, n)), Array2::zeros((n, n))];
        for (k, &(dy, dx)) in self.offsets.iter().enumerate() {
            for ((i, j), &m) in mask.indexed_iter() {
                if m {
                    q[k][[i, j]] = bilinear(img, i as f64 + o + dy, j as f64 + o + dx);
                }
            }
        }
        let (mut tot, mut cnt) = (0.0, 0.0);
        for ((i, j), &m) in mask.indexed_iter() {
            if m {
                tot += q[0][[i, j]] + q[1][[i, j]] + q[2][[i, j]] + q[3][[i, j]];
                cnt += 1.0;
            }
        }
        let i0 = (tot / cnt).max(f64::MIN_POSITIVE);
        let sx = (&q[0] + &q[3] - &q[1] - &q[2]) / i0;
        let sy = (&q[0] + &q[1] - &q[2] - &q[3]) / i0;
        (sx, sy)
    }

    /// Integrated phase from the calibrated slope signals, before any gain
    /// compensation.
    pub fn integrate(&self, img: &Array2<f64>) -> Array2<f64> {
        let n = self.sensor.n;
        let mask = &self.sensor.mask;
        let (sx, sy) = self.signals(img);
        let (ex, ey) = (&sx - &self.reference.0, &sy - &self.reference.1);
        let g = &self.gains;
        let gx = &g[0] * &ex + &g[1] * &ey;
        let gy = &g[2] * &ex + &g[3] * &ey;
        let dx = Array2::from_shape_fn((n, n), |(i, j)| if j + 1 < n { 0.5 * (gx[[i, j]] + gx[[i, j + 1]]) } else { 0.0 });
        let dy = Array2::from_shape_fn((n, n), |(i, j)| if i + 1 < n { 0.5 * (gy[[i, j]] + gy[[i + 1, j]]) } else { 0.0 });
        let sol = integrate_differences(mask, &dx, &dy, CG_TOL, default_max_iters(mask));
        let mut phi = sol.phi;
        remove_piston(&mut phi, mask);
        phi
    }

    pub fn reconstruct(&self, img: &Array2<f64>, opts: &LinearOptions) -> Result<LinearResult> {
        if img.dim() != (self.sensor.m, self.sensor.m) {
            return invalid(format!("intensity must be {0}x{0}", self.sensor.m));
        }
        let phi = self.integrate(img);
        let mut gain = 1.0;
        if opts.gain_compensation {
            gain = best_gain(&self.sensor, &phi, img);
        }
        let phase = phi.mapv(|v| v * gain);
        let objective = self.sensor.objective(&phase, img);
        Ok(LinearResult { phase: PhaseGrid { values: phase, mask: self.sensor.mask.clone(), pitch: 1.0 }, calibration: self.calibration, optical_gain: gain, objective })
    }

    /// Centre of the aperture in focal-grid coordinates.
    pub fn centre(&self) -> (f64, f64) {
        self.centre
    }
}

/// Scale k > 0 minimising J(k * phi): coarse log-spaced scan followed by a
/// golden-section refinement of the best bracket.
pub fn best_gain(sensor: &FourierSensor, phi: &Array2<f64>, data: &Array2<f64>) -> f64 {
    if phi.iter().all(|&v| v == 0.0) {
        return 1.0;
    }
    let f = |lk: f64| sensor.objective(&phi.mapv(|v| v * lk.exp()), data);
    let (lo, hi, step) = (-2.0f64, 7.0f64, 0.25f64);
    let grid: Vec<f64> = (0..=((hi - lo) / step).round() as usize).map(|k| lo + step * k as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut b = 0;
    for k in 1..vals.len() {
        if vals[k] < vals[b] {
            b = k;
        }
    }
    let (xb, fb) = golden(&f, grid[b.saturating_sub(1)], grid[(b + 1).min(grid.len() - 1)], 20);
    if fb <= vals[b] {
        xb.exp()
    } else {
        grid[b].exp()
    }
}

/// Largest global tilt searched by [`refine_tilt`], as a focal spot
/// displacement in diffraction widths.
pub const TILT_SEARCH_WIDTHS: f64 = 8.0;

/// Adds to `phi` the global tilt that minimises J. Each axis is scanned in
/// half-width steps of spot displacement and the best point refined by
/// golden section; two alternating sweeps. Beyond the quad-cell range the
/// linear signals saturate, while J keeps a basin around the true tilt.
pub fn refine_tilt(sensor: &FourierSensor, phi: &Array2<f64>, data: &Array2<f64>) -> Array2<f64> {
    let n = sensor.n;
    let d = aperture_diameter(&sensor.mask).max(1.0);
    let c = (n as f64 - 1.0) / 2.0;
    let mode_x = Array2::from_shape_fn((n, n), |(i, j)| if sensor.mask[[i, j]] { j as f64 - c } else { 0.0 });
    let mode_y = mode_x.t().to_owned();
    // A spot shift of one diffraction width is a gradient of 2 pi / d.
    let unit = 2.0 * PI / d;
    let mut cur = phi.clone();
    let mut best = sensor.objective(&cur, data);
    for _ in 0..2 {
        for mode in [&mode_x, &mode_y] {
            let f = |g: f64| sensor.objective(&(&cur + &(mode * g)), data);
            let steps = (2.0 * TILT_SEARCH_WIDTHS) as i64;
            let (mut bg, mut bj) = (0.0, best);
            for k in -steps..=steps {
                let g = 0.5 * unit * k as f64;
                if k != 0 {
                    let v = f(g);
                    if v < bj {
                        bg = g;
                        bj = v;
                    }
                }
            }
            let (gx, jx) = golden(&f, bg - 0.5 * unit, bg + 0.5 * unit, 20);
            let (bg, bj) = if jx < bj { (gx, jx) } else { (bg, bj) };
            if bj < best {
                cur.scaled_add(bg, mode);
                best = bj;
            }
        }
    }
    cur
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut c: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - g * (c - a);
    let mut x2 = a + g * (c - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - g * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (c - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// One-shot linear reconstruction (calibrates, then reconstructs).
pub fn linear_reconstruct_p4(img: &Array2<f64>, mask: &Array2<bool>, c: f64, padding: usize, opts: &LinearOptions) -> Result<LinearResult> {
    P4Linear::calibrate(mask, c, padding, None)?.reconstruct(img, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ApertureSpec;

    #[test]
    fn flat_input_gives_zero() {
        let mask = ApertureSpec::disc(32).mask(32).unwrap();
        let lin = P4Linear::calibrate(&mask, 1.0, 4, None).unwrap();
        let img = lin.sensor.intensity(&Array2::zeros((32, 32)));
        let r = lin.reconstruct(&img, &LinearOptions { gain_compensation: false }).unwrap();
        assert!(r.phase.values.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn quadrants_registered_at_expected_offsets() {
        let mask = ApertureSpec::disc(32).mask(32).unwrap();
        let lin = P4Linear::calibrate(&mask, 1.0, 4, None).unwrap();
        let want = 128.0 / (2.0 * std::f64::consts::PI);
        for (dy, dx) in lin.offsets {
            assert!((dy.abs() - want).abs() < 1.0 && (dx.abs() - want).abs() < 1.0, "{dy} {dx}");
        }
    }

    #[test]
    fn overlapping_pupils_rejected() {
        let mask = ApertureSpec::disc(32).mask(32).unwrap();
        assert!(P4Linear::calibrate(&mask, 1.0, 1, None).is_err());
    }

    #[test]
    fn small_tilt_recovered() {
        let n = 64;
        let mask = ApertureSpec::disc(64).mask(n).unwrap();
        let lin = P4Linear::calibrate(&mask, 1.0, 4, None).unwrap();
        let mut t = Array2::from_shape_fn((n, n), |(i, j)| 0.3 / 1.4 * ((j as f64 - 31.5) * 0.6 + (i as f64 - 31.5) * 0.8) / 31.5);
        remove_piston(&mut t, &mask);
        let img = lin.sensor.intensity(&t);
        let r = lin.reconstruct(&img, &LinearOptions { gain_compensation: false }).unwrap();
        let num: f64 = (&r.phase.values - &t).iter().map(|v| v * v).sum();
        let den: f64 = t.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() <= 0.10, "{}", (num / den).sqrt());
    }

    #[test]
    fn tilt_search_finds_saturated_tilt() {
        let n = 32;
        let mask = ApertureSpec::disc(32).mask(n).unwrap();
        let sensor = FourierSensor::new(&mask, ShapeFunction::new(ShapeKind::Pyramid4, 1.0), 4, None).unwrap();
        // spot displaced by about three diffraction widths
        let g = 3.0 * 2.0 * PI / 32.0;
        let t = Array2::from_shape_fn((n, n), |(i, j)| if mask[[i, j]] { g * (0.8 * (j as f64 - 15.5) - 0.6 * (i as f64 - 15.5)) } else { 0.0 });
        let data = sensor.intensity(&t);
        let z = Array2::zeros((n, n));
        let r = refine_tilt(&sensor, &z, &data);
        assert!(sensor.objective(&r, &data) < 1e-3 * sensor.objective(&z, &data));
        let err = (&r - &t).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 0.05, "{err}");
    }
}
