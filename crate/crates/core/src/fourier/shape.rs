//! Focal-plane shape functions psi of the Fourier-type sensors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::DwfsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Pyramid4,
    RoofX,
    RoofY,
    Pyramid3,
    Cone,
    Iquad,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] =
        [ShapeKind::Pyramid4, ShapeKind::RoofX, ShapeKind::RoofY, ShapeKind::Pyramid3, ShapeKind::Cone, ShapeKind::Iquad];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Pyramid4 => "pyramid4",
            ShapeKind::RoofX => "roof_x",
            ShapeKind::RoofY => "roof_y",
            ShapeKind::Pyramid3 => "pyramid3",
            ShapeKind::Cone => "cone",
            ShapeKind::Iquad => "iquad",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = DwfsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DwfsError::Validation(format!("unknown shape kind '{s}'")))
    }
}

/// Shape kind plus apex constant c (radians per frequency pixel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFunction {
    pub kind: ShapeKind,
    pub c: f64,
}

impl ShapeFunction {
    pub fn new(kind: ShapeKind, c: f64) -> Self {
        Self { kind, c }
    }

    /// psi at frequency (xi1, xi2); xi1 runs along axis 1 (columns).
    pub fn eval(&self, xi1: f64, xi2: f64) -> f64 {
        let c = self.c;
        match self.kind {
            // Written as the sum of the two roofs so the decomposition is exact.
            ShapeKind::Pyramid4 => c * xi1.abs() + c * xi2.abs(),
            ShapeKind::RoofX => c * xi1.abs(),
            ShapeKind::RoofY => c * xi2.abs(),
            ShapeKind::Cone => c * (xi1 * xi1 + xi2 * xi2).sqrt(),
            ShapeKind::Iquad => {
                if xi1 * xi2 < 0.0 {
                    PI / 2.0
                } else {
                    0.0
                }
            }
            ShapeKind::Pyramid3 => {
                // Sector angle arctan(xi1 / xi2) read through atan2; points on
                // a boundary ray belong to the earlier case.
                let th = xi1.atan2(xi2);
                let s3 = 3f64.sqrt();
                if th >= -PI / 3.0 && th <= PI / 3.0 {
                    -2.0 * c * xi1
                } else if th > PI / 3.0 && th <= PI {
                    c * (xi1 - s3 * xi2)
                } else {
                    c * (xi1 + s3 * xi2)
                }
            }
        }
    }
}

/// psi on an m x m centred frequency grid, xi = index - m/2.
pub fn eval_shape(sf: &ShapeFunction, m: usize) -> Array2<f64> {
    let h = (m / 2) as f64;
    Array2::from_shape_fn((m, m), |(i, j)| sf.eval(j as f64 - h, i as f64 - h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apex_and_iquad_values() {
        let p4 = ShapeFunction::new(ShapeKind::Pyramid4, 1.0);
        assert_eq!(p4.eval(0.0, 0.0), 0.0);
        let iq = ShapeFunction::new(ShapeKind::Iquad, 1.0);
        assert_eq!(iq.eval(1.0, -1.0), PI / 2.0);
        assert_eq!(iq.eval(1.0, 1.0), 0.0);
        assert_eq!(iq.eval(0.0, -1.0), 0.0);
    }

    #[test]
    fn cone_rotation_invariant() {
        let m = 16;
        let a = eval_shape(&ShapeFunction::new(ShapeKind::Cone, 0.7), m);
        // rotation by 90 degrees about the centre index m/2
        for i in 1..m {
            for j in 1..m {
                let (y, x) = (i as i64 - 8, j as i64 - 8);
                let (i2, j2) = ((x + 8) as usize, (-y + 8) as usize);
                if j2 < m {
                    assert_eq!(a[[i, j]], a[[i2, j2]]);
                }
            }
        }
    }

    #[test]
    fn pyramid3_sectors() {
        let p = ShapeFunction::new(ShapeKind::Pyramid3, 1.0);
        let s3 = 3f64.sqrt();
        // xi2 > 0 axis: first sector
        assert_eq!(p.eval(0.0, 2.0), 0.0);
        assert_eq!(p.eval(1.0, 2.0), -2.0);
        // theta = pi/2: second sector
        assert_eq!(p.eval(1.0, 0.0), 1.0);
        // theta = -pi/2: third sector
        assert_eq!(p.eval(-1.0, 0.0), -1.0);
        // just inside the first sector near its theta = pi/3 edge
        let (x1, x2) = (s3 - 1e-9, 1.0);
        assert!((p.eval(x1, x2) + 2.0 * s3).abs() < 1e-8);
        // theta = pi (negative xi2 axis) takes the second case
        assert_eq!(p.eval(0.0, -1.0), s3);
    }

    #[test]
    fn roofs_sum_to_pyramid() {
        let m = 12;
        let c = 1.3;
        let p = eval_shape(&ShapeFunction::new(ShapeKind::Pyramid4, c), m);
        let x = eval_shape(&ShapeFunction::new(ShapeKind::RoofX, c), m);
        let y = eval_shape(&ShapeFunction::new(ShapeKind::RoofY, c), m);
        assert_eq!(p, &x + &y);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in ShapeKind::ALL {
            assert_eq!(k.name().parse::<ShapeKind>().unwrap(), k);
        }
        assert!("hexagon".parse::<ShapeKind>().is_err());
    }
}
