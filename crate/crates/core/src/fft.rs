//! Centred unitary 2-D DFT and the Neumann cosine transforms used by the
//! Poisson solver.
//!
//! Zero frequency sits at index n/2 on both axes. For even n the centring
//! shifts reduce to a (-1)^(i+j) checkerboard applied before and after the
//! plain FFT, which is what `Dft2` does.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Zip};
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::{Fft, FftPlanner};

use crate::grid::{ComplexField, C64};

/// Plan pair for centred unitary transforms of one size. Immutable after
/// construction, so it can be shared between threads.
pub struct Dft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Dft2 {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    /// Shared plan for size `n`, cached process-wide.
    pub fn cached(n: usize) -> Arc<Dft2> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Dft2>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut g = cache.lock().unwrap_or_else(|e| e.into_inner());
        g.entry(n).or_insert_with(|| Arc::new(Dft2::new(n))).clone()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn run(&self, a: &mut Array2<C64>, plan: &Arc<dyn Fft<f64>>, scale: f64) {
        let n = self.n;
        assert_eq!(a.dim(), (n, n), "transform size mismatch");
        checker(a, 1.0);
        let mut buf: Vec<C64> = a.iter().copied().collect();
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut buf, &mut scratch);
        let mut t = vec![C64::new(0.0, 0.0); n * n];
        transpose::transpose(&buf, &mut t, n, n);
        plan.process_with_scratch(&mut t, &mut scratch);
        transpose::transpose(&t, &mut buf, n, n);
        for (dst, src) in a.iter_mut().zip(buf) {
            *dst = src;
        }
        checker(a, scale);
    }

    /// In-place centred forward transform with 1/n normalisation.
    pub fn forward(&self, a: &mut Array2<C64>) {
        let s = 1.0 / self.n as f64;
        self.run(a, &self.fwd.clone(), s);
    }

    /// In-place centred inverse transform with 1/n normalisation.
    pub fn inverse(&self, a: &mut Array2<C64>) {
        let s = 1.0 / self.n as f64;
        self.run(a, &self.inv.clone(), s);
    }
}

fn checker(a: &mut Array2<C64>, scale: f64) {
    Zip::indexed(a).for_each(|(i, j), z| {
        *z *= if (i + j) % 2 == 0 { scale } else { -scale };
    });
}

/// Centred unitary forward DFT.
pub fn dft2_centered(f: &ComplexField) -> ComplexField {
    let mut d = f.data.clone();
    Dft2::cached(f.n()).forward(&mut d);
    ComplexField { data: d, pitch: f.pitch }
}

/// Centred unitary inverse DFT.
pub fn idft2_centered(g: &ComplexField) -> ComplexField {
    let mut d = g.data.clone();
    Dft2::cached(g.n()).inverse(&mut d);
    ComplexField { data: d, pitch: g.pitch }
}

/// Array versions used internally.
pub fn dft2c(a: &Array2<C64>) -> Array2<C64> {
    let mut d = a.clone();
    Dft2::cached(a.nrows()).forward(&mut d);
    d
}

pub fn idft2c(a: &Array2<C64>) -> Array2<C64> {
    let mut d = a.clone();
    Dft2::cached(a.nrows()).inverse(&mut d);
    d
}

/// Orthonormal 2-D DCT-II and its inverse (DCT-III) on square real arrays.
pub struct Dct2 {
    n: usize,
    plan: Arc<dyn TransformType2And3<f64>>,
}

impl Dct2 {
    pub fn new(n: usize) -> Self {
        let mut p = DctPlanner::new();
        Self { n, plan: p.plan_dct2(n) }
    }

    fn axes(&self, a: &mut Array2<f64>, inverse: bool) {
        let n = self.n;
        assert_eq!(a.dim(), (n, n));
        // rustdct transforms are unnormalised; the factors below make them orthonormal.
        let s0 = (1.0 / n as f64).sqrt();
        let s = (2.0 / n as f64).sqrt();
        let mut buf: Vec<f64> = a.iter().copied().collect();
        let mut t = vec![0.0; n * n];
        let mut scratch = vec![0.0; self.plan.get_scratch_len()];
        for _ in 0..2 {
            for row in buf.chunks_mut(n) {
                if inverse {
                    row[0] *= 2.0 * s0;
                    for v in row[1..].iter_mut() {
                        *v *= s;
                    }
                    self.plan.process_dct3_with_scratch(row, &mut scratch);
                } else {
                    self.plan.process_dct2_with_scratch(row, &mut scratch);
                    row[0] *= s0;
                    for v in row[1..].iter_mut() {
                        *v *= s;
                    }
                }
            }
            transpose::transpose(&buf, &mut t, n, n);
            std::mem::swap(&mut buf, &mut t);
        }
        for (dst, src) in a.iter_mut().zip(buf) {
            *dst = src;
        }
    }

    pub fn forward(&self, a: &mut Array2<f64>) {
        self.axes(a, false)
    }

    pub fn inverse(&self, a: &mut Array2<f64>) {
        self.axes(a, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rand_field(n: usize, seed: u64) -> Array2<C64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Array2::from_shape_fn((n, n), |_| {
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            C64::new(next(), next())
        })
    }

    /// Direct O(n^4) centred DFT: frequency index k maps to k - n/2.
    fn direct(a: &Array2<C64>, sign: f64) -> Array2<C64> {
        let n = a.nrows();
        let h = (n / 2) as f64;
        Array2::from_shape_fn((n, n), |(k1, k2)| {
            let mut acc = C64::new(0.0, 0.0);
            for x1 in 0..n {
                for x2 in 0..n {
                    let ph = sign * 2.0 * PI / n as f64
                        * ((k1 as f64 - h) * (x1 as f64 - h) + (k2 as f64 - h) * (x2 as f64 - h));
                    acc += a[[x1, x2]] * C64::from_polar(1.0, ph);
                }
            }
            acc / n as f64
        })
    }

    #[test]
    fn matches_direct_sum() {
        for n in [4usize, 6, 8] {
            let a = rand_field(n, n as u64);
            let f = dft2c(&a);
            let g = idft2c(&a);
            let df = direct(&a, -1.0);
            let dg = direct(&a, 1.0);
            for (x, y) in f.iter().zip(df.iter()) {
                assert!((x - y).norm() < 1e-12);
            }
            for (x, y) in g.iter().zip(dg.iter()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_and_constant() {
        let n = 16;
        let mut d = Array2::zeros((n, n));
        d[[n / 2, n / 2]] = C64::new(1.0, 0.0);
        let f = dft2c(&d);
        assert!(f.iter().all(|z| (z - C64::new(1.0 / n as f64, 0.0)).norm() < 1e-14));
        let c = Array2::from_elem((n, n), C64::new(1.0, 0.0));
        let g = dft2c(&c);
        for ((i, j), z) in g.indexed_iter() {
            let want = if i == n / 2 && j == n / 2 { n as f64 } else { 0.0 };
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let a = rand_field(32, 7);
        let f = dft2c(&a);
        let b = idft2c(&f);
        let p0: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let p1: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        assert!((p0 - p1).abs() / p0 < 1e-12);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn dct_matches_direct_and_inverts() {
        let n = 6;
        let a = rand_field(n, 3).mapv(|z| z.re);
        let mut f = a.clone();
        let d = Dct2::new(n);
        d.forward(&mut f);
        let w = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for k1 in 0..n {
            for k2 in 0..n {
                let mut acc = 0.0;
                for x1 in 0..n {
                    for x2 in 0..n {
                        acc += a[[x1, x2]]
                            * (PI * (x1 as f64 + 0.5) * k1 as f64 / n as f64).cos()
                            * (PI * (x2 as f64 + 0.5) * k2 as f64 / n as f64).cos();
                    }
                }
                assert!((f[[k1, k2]] - w(k1) * w(k2) * acc).abs() < 1e-12);
            }
        }
        d.inverse(&mut f);
        for (x, y) in a.iter().zip(f.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
