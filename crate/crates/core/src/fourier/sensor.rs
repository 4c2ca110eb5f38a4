//! OTF-filtered intensity formation and its adjoint gradient.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Zip};

use crate::error::{invalid, Result};
use crate::fft::Dft2;
use crate::fourier::shape::{eval_shape, ShapeFunction};
use crate::grid::{PhaseGrid, C64};
use crate::optics::phasor;

/// Circular modulation: radius in units of lambda/D, `steps` samples per period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationSpec {
    pub radius: f64,
    pub steps: usize,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        Self { radius: 0.0, steps: 16 }
    }
}

/// Digital Fourier-type sensor on an N x N pupil grid embedded in an
/// M = padding * N focal grid.
pub struct FourierSensor {
    pub n: usize,
    pub m: usize,
    pub offset: usize,
    pub mask: Array2<bool>,
    pub shape: ShapeFunction,
    otf: Array2<C64>,
    dft: Arc<Dft2>,
    /// Modulation tilts (empty when unmodulated).
    mods: Vec<Array2<f64>>,
}

impl FourierSensor {
    pub fn new(mask: &Array2<bool>, shape: ShapeFunction, padding: usize, modulation: Option<ModulationSpec>) -> Result<Self> {
        let n = mask.nrows();
        if mask.ncols() != n || n < 4 || n % 2 != 0 {
            return invalid("mask must be square with even size >= 4");
        }
        if padding < 1 {
            return invalid("padding must be >= 1");
        }
        if !mask.iter().any(|&b| b) {
            return invalid("empty aperture mask");
        }
        if !(shape.c > 0.0) {
            return invalid("apex constant c must be > 0");
        }
        let m = n * padding;
        let otf = eval_shape(&shape, m).mapv(|p| C64::from_polar(1.0, p));
        let mut mods = Vec::new();
        if let Some(md) = modulation {
            if md.steps < 1 {
                return invalid("modulation steps must be >= 1");
            }
            if md.radius < 0.0 {
                return invalid("modulation radius must be >= 0");
            }
            if md.radius > 0.0 {
                let d = aperture_diameter(mask);
                let h = (n / 2) as f64;
                for k in 0..md.steps {
                    let t = k as f64 / md.steps as f64;
                    let (ct, st) = ((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
                    let a = 2.0 * PI * md.radius / d;
                    mods.push(Array2::from_shape_fn((n, n), |(i, j)| a * ((j as f64 - h) * ct + (i as f64 - h) * st)));
                }
            }
        }
        Ok(Self { n, m, offset: (m - n) / 2, mask: mask.clone(), shape, otf, dft: Dft2::cached(m), mods })
    }

    pub fn is_modulated(&self) -> bool {
        !self.mods.is_empty()
    }

    fn embed(&self, u: &Array2<C64>) -> Array2<C64> {
        let mut a = Array2::zeros((self.m, self.m));
        let o = self.offset;
        a.slice_mut(s![o..o + self.n, o..o + self.n]).assign(u);
        a
    }

    fn crop(&self, a: &Array2<C64>) -> Array2<C64> {
        let o = self.offset;
        a.slice(s![o..o + self.n, o..o + self.n]).to_owned()
    }

    /// Incident field chi * exp(-i phi) and focal-filtered field E.
    fn field(&self, phi: &Array2<f64>) -> (Array2<C64>, Array2<C64>) {
        let u = phasor(phi, &self.mask, -1.0);
        let mut e = self.embed(&u);
        self.dft.forward(&mut e);
        Zip::from(&mut e).and(&self.otf).for_each(|z, &o| *z *= o);
        self.dft.inverse(&mut e);
        (u, e)
    }

    fn each_phase<F: FnMut(&Array2<f64>)>(&self, phi: &Array2<f64>, mut f: F) {
        if self.mods.is_empty() {
            f(phi);
        } else {
            for md in &self.mods {
                f(&(phi + md));
            }
        }
    }

    /// M x M intensity, time-averaged over the modulation samples.
    pub fn intensity(&self, phi: &Array2<f64>) -> Array2<f64> {
        let mut acc = Array2::zeros((self.m, self.m));
        let mut k = 0.0;
        self.each_phase(phi, |p| {
            let (_, e) = self.field(p);
            Zip::from(&mut acc).and(&e).for_each(|a, z| *a += z.norm_sqr());
            k += 1.0;
        });
        acc.mapv_inplace(|v| v / k);
        acc
    }

    /// J = 0.5 ||I(phi) - data||^2 and dJ/dphi (zero outside the mask).
    pub fn objective_and_gradient(&self, phi: &Array2<f64>, data: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut fields = Vec::new();
        self.each_phase(phi, |p| fields.push(self.field(p)));
        let k = fields.len() as f64;
        let mut r = Array2::<f64>::zeros((self.m, self.m));
        for (_, e) in &fields {
            Zip::from(&mut r).and(e).for_each(|a, z| *a += z.norm_sqr() / k);
        }
        r -= data;
        let j = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let mut grad = Array2::zeros((self.n, self.n));
        for (u, e) in fields {
            let mut g = e;
            Zip::from(&mut g).and(&r).for_each(|z, &rv| *z *= rv);
            self.dft.forward(&mut g);
            Zip::from(&mut g).and(&self.otf).for_each(|z, &o| *z *= o.conj());
            self.dft.inverse(&mut g);
            let g = self.crop(&g);
            Zip::from(&mut grad).and(&g).and(&u).and(&self.mask).for_each(|d, gz, uz, &mk| {
                if mk {
                    *d += 2.0 * (gz.conj() * uz).im / k;
                }
            });
        }
        (j, grad)
    }

    pub fn objective(&self, phi: &Array2<f64>, data: &Array2<f64>) -> f64 {
        let i = self.intensity(phi);
        0.5 * i.iter().zip(data.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }
}

/// Extent of the aperture along its widest axis, in pixels.
pub fn aperture_diameter(mask: &Array2<bool>) -> f64 {
    let (mut lo, mut hi) = (usize::MAX, 0usize);
    let (mut lo2, mut hi2) = (usize::MAX, 0usize);
    for ((i, j), &m) in mask.indexed_iter() {
        if m {
            lo = lo.min(j);
            hi = hi.max(j);
            lo2 = lo2.min(i);
            hi2 = hi2.max(i);
        }
    }
    if lo == usize::MAX {
        return 0.0;
    }
    ((hi - lo + 1).max(hi2 - lo2 + 1)) as f64
}

/// N x N intensity |idft(e^{i psi} dft(chi e^{-i pw}))|^2 with no padding.
pub fn sensor_intensity(pw: &PhaseGrid, sf: &ShapeFunction) -> Result<Array2<f64>> {
    Ok(FourierSensor::new(&pw.mask, *sf, 1, None)?.intensity(&pw.values))
}

/// Time-averaged intensity under circular modulation, no padding.
pub fn modulated_intensity(pw: &PhaseGrid, sf: &ShapeFunction, md: &ModulationSpec) -> Result<Array2<f64>> {
    Ok(FourierSensor::new(&pw.mask, *sf, 1, Some(*md))?.intensity(&pw.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::shape::ShapeKind;
    use crate::grid::ApertureSpec;

    fn smooth(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| 0.3 * (i as f64 * 0.4).sin() + 0.2 * (j as f64 * 0.3).cos() + 0.01 * (i * j) as f64)
    }

    #[test]
    fn zero_shape_is_identity_filter() {
        let mask = ApertureSpec::disc(14).mask(16).unwrap();
        let pw = PhaseGrid::new(smooth(16), mask.clone()).unwrap();
        // c -> tiny gives psi ~ 0 up to 1e-30 phases
        let sf = ShapeFunction::new(ShapeKind::Pyramid4, 1e-300);
        let i = sensor_intensity(&pw, &sf).unwrap();
        for (a, &m) in i.iter().zip(mask.iter()) {
            assert!((a - if m { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn power_is_conserved() {
        let mask = ApertureSpec::disc(14).mask(16).unwrap();
        let pw = PhaseGrid::new(smooth(16) * 9.0, mask.clone()).unwrap();
        let count = mask.iter().filter(|&&b| b).count() as f64;
        for k in ShapeKind::ALL {
            let sf = ShapeFunction::new(k, 1.0);
            let i = sensor_intensity(&pw, &sf).unwrap();
            assert!((i.sum() - count).abs() / count < 1e-12);
        }
    }

    #[test]
    fn modulation_limits() {
        let mask = ApertureSpec::disc(16).mask(16).unwrap();
        let pw = PhaseGrid::new(smooth(16), mask.clone()).unwrap();
        let sf = ShapeFunction::new(ShapeKind::Pyramid4, 1.0);
        let a = sensor_intensity(&pw, &sf).unwrap();
        let b = modulated_intensity(&pw, &sf, &ModulationSpec { radius: 0.0, steps: 7 }).unwrap();
        assert_eq!(a, b);
        // single step equals the t = 0 tilt
        let r = 2.0;
        let c = modulated_intensity(&pw, &sf, &ModulationSpec { radius: r, steps: 1 }).unwrap();
        let d = aperture_diameter(&mask);
        let tilt = Array2::from_shape_fn((16, 16), |(_, j)| 2.0 * PI * r / d * (j as f64 - 8.0));
        let e = sensor_intensity(&pw.with_values(&pw.values + &tilt), &sf).unwrap();
        for (x, y) in c.iter().zip(e.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(FourierSensor::new(&mask, sf, 1, Some(ModulationSpec { radius: 1.0, steps: 0 })).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 16;
        let mask = ApertureSpec::disc(12).mask(n).unwrap();
        for (k, md) in [(ShapeKind::Pyramid4, None), (ShapeKind::Pyramid3, Some(ModulationSpec { radius: 1.5, steps: 3 }))] {
            let sen = FourierSensor::new(&mask, ShapeFunction::new(k, 1.0), 2, md).unwrap();
            let data = sen.intensity(&(smooth(n) * 2.0));
            let phi = smooth(n).mapv(|v| -v * 0.5 + 0.1);
            let (_, g) = sen.objective_and_gradient(&phi, &data);
            let dir = Array2::from_shape_fn((n, n), |(i, j)| if mask[[i, j]] { ((i * 7 + j * 3) % 5) as f64 - 2.0 } else { 0.0 });
            let h = 1e-5;
            let jp = sen.objective(&(&phi + &(&dir * h)), &data);
            let jm = sen.objective(&(&phi - &(&dir * h)), &data);
            let fd = (jp - jm) / (2.0 * h);
            let an = (&g * &dir).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }
}
