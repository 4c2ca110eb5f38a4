//! Grid and field containers.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type C64 = Complex64;

/// Real phase samples (radians) on a square grid together with the aperture mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub values: Array2<f64>,
    pub mask: Array2<bool>,
    pub pitch: f64,
}

pub(crate) fn check_square(shape: &[usize]) -> Result<usize> {
    let (r, c) = (shape[0], shape[1]);
    if r != c {
        return invalid(format!("grid must be square, got {r}x{c}"));
    }
    if r < 4 || r % 2 != 0 {
        return invalid(format!("grid size must be even and at least 4, got {r}"));
    }
    Ok(r)
}

impl PhaseGrid {
    pub fn new(values: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        check_square(values.shape())?;
        if values.shape() != mask.shape() {
            return invalid("mask shape differs from value shape");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("phase values must be finite");
        }
        Ok(Self { values, mask, pitch: 1.0 })
    }

    /// Grid with an all-true mask.
    pub fn full(values: Array2<f64>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        Self::new(values, mask)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Values with every outside-mask pixel set to zero.
    pub fn masked_values(&self) -> Array2<f64> {
        let mut v = self.values.clone();
        v.zip_mut_with(&self.mask, |x, &m| {
            if !m {
                *x = 0.0
            }
        });
        v
    }

    /// Same grid with outside-mask values zeroed.
    pub fn masked(&self) -> Self {
        Self { values: self.masked_values(), mask: self.mask.clone(), pitch: self.pitch }
    }

    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self { values, mask: self.mask.clone(), pitch: self.pitch }
    }

    /// Mean over the mask (0 for an empty mask).
    pub fn mask_mean(&self) -> f64 {
        mask_mean(&self.values, &self.mask)
    }
}

pub fn mask_mean(v: &Array2<f64>, mask: &Array2<bool>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for (x, &m) in v.iter().zip(mask.iter()) {
        if m {
            s += x;
            k += 1;
        }
    }
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}

/// Subtract the in-mask mean and zero the outside.
pub fn remove_piston(v: &mut Array2<f64>, mask: &Array2<bool>) {
    let mu = mask_mean(v, mask);
    v.zip_mut_with(mask, |x, &m| *x = if m { *x - mu } else { 0.0 });
}

/// Complex samples on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub data: Array2<C64>,
    pub pitch: f64,
}

impl ComplexField {
    pub fn new(data: Array2<C64>) -> Result<Self> {
        check_square(data.shape())?;
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(Self { data, pitch: 1.0 })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn re(&self) -> Array2<f64> {
        self.data.mapv(|z| z.re)
    }

    pub fn im(&self) -> Array2<f64> {
        self.data.mapv(|z| z.im)
    }

    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApertureKind {
    Disc,
    Square,
    Full,
}

/// Aperture description; `diameter_px` is ignored for `Full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApertureSpec {
    pub kind: ApertureKind,
    pub diameter_px: usize,
}

impl ApertureSpec {
    pub fn disc(d: usize) -> Self {
        Self { kind: ApertureKind::Disc, diameter_px: d }
    }

    pub fn square(d: usize) -> Self {
        Self { kind: ApertureKind::Square, diameter_px: d }
    }

    pub fn full() -> Self {
        Self { kind: ApertureKind::Full, diameter_px: 0 }
    }

    /// Mask centred on the grid midpoint (n-1)/2, so it is symmetric under
    /// index reversal along both axes.
    pub fn mask(&self, n: usize) -> Result<Array2<bool>> {
        if self.kind != ApertureKind::Full && (self.diameter_px == 0 || self.diameter_px > n) {
            return invalid(format!("aperture diameter {} not in 1..={n}", self.diameter_px));
        }
        let c = (n as f64 - 1.0) / 2.0;
        let r = self.diameter_px as f64 / 2.0;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            let (y, x) = (i as f64 - c, j as f64 - c);
            match self.kind {
                ApertureKind::Full => true,
                ApertureKind::Disc => x * x + y * y <= r * r,
                ApertureKind::Square => x.abs() < r && y.abs() < r,
            }
        }))
    }
}
