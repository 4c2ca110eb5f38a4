//! Digital Shack-Hartmann sensor: subaperture tiling, subimages, slopes and
//! zonal integration.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fft::Dft2;
use crate::grid::{mask_mean, ComplexField, PhaseGrid, C64};
use crate::lsq::{default_max_iters, integrate_differences, CG_TOL};
use crate::optics::phasor;
use crate::report::UnwrapReport;

#[derive(Debug, Clone, PartialEq)]
pub struct SubapertureLayout {
    pub n: usize,
    pub n_sub: usize,
    pub sub_px: usize,
    /// A subaperture is active when at least half of its pixels are in the aperture.
    pub active: Array2<bool>,
    pub mask: Array2<bool>,
}

impl SubapertureLayout {
    pub fn new(mask: &Array2<bool>, n_sub: usize) -> Result<Self> {
        let n = mask.nrows();
        if mask.ncols() != n {
            return invalid("mask must be square");
        }
        if n_sub < 2 || n % n_sub != 0 {
            return invalid(format!("n_sub = {n_sub} must be >= 2 and divide N = {n}"));
        }
        let sub_px = n / n_sub;
        let active = Array2::from_shape_fn((n_sub, n_sub), |(j, k)| {
            let blk = mask.slice(s![j * sub_px..(j + 1) * sub_px, k * sub_px..(k + 1) * sub_px]);
            2 * blk.iter().filter(|&&m| m).count() >= sub_px * sub_px
        });
        Ok(Self { n, n_sub, sub_px, active, mask: mask.clone() })
    }

    fn block(&self, pw: &PhaseGrid, j: usize, k: usize) -> Array2<C64> {
        let p = self.sub_px;
        let sl = s![j * p..(j + 1) * p, k * p..(k + 1) * p];
        phasor(&pw.values.slice(sl).to_owned(), &pw.mask.slice(sl).to_owned(), 1.0)
    }
}

/// Subimage of subaperture (j, k): the (j, k) block of chi * exp(i pw),
/// transformed on the sub_px grid.
pub fn subaperture_field(pw: &PhaseGrid, j: usize, k: usize, layout: &SubapertureLayout) -> Result<ComplexField> {
    if j >= layout.n_sub || k >= layout.n_sub {
        return invalid(format!("subaperture ({j}, {k}) out of range 0..{}", layout.n_sub));
    }
    if pw.n() != layout.n {
        return invalid("layout does not match grid size");
    }
    let mut b = layout.block(pw, j, k);
    Dft2::cached(layout.sub_px).inverse(&mut b);
    Ok(ComplexField { data: b, pitch: pw.pitch })
}

/// How the spot position is read from a subimage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidEstimator {
    /// Circular first moment of |E|^2 on a focal grid oversampled by two.
    /// Exact for any locally linear phase, with no aliasing bias.
    #[default]
    PhasorMoment,
    /// Linear centre of mass of |E| on the sub_px grid.
    Modulus,
}

#[derive(Debug, Clone)]
pub struct SlopeField {
    /// Slopes in subimage pixels; positive for a phase increasing along the axis.
    pub sx: Array2<f64>,
    pub sy: Array2<f64>,
    /// Active and measurable.
    pub valid: Array2<bool>,
    pub layout: SubapertureLayout,
}

fn slope_modulus(e: &Array2<C64>) -> Option<(f64, f64)> {
    let p = e.nrows();
    let h = (p / 2) as f64;
    let (mut w, mut mx, mut my) = (0.0, 0.0, 0.0);
    for ((i, j), z) in e.indexed_iter() {
        let a = z.norm();
        w += a;
        mx += a * (j as f64 - h);
        my += a * (i as f64 - h);
    }
    if w <= 0.0 {
        return None;
    }
    Some((-mx / w, -my / w))
}

fn slope_phasor(block: &Array2<C64>, plan: &Dft2) -> Option<(f64, f64)> {
    let m = block.nrows();
    let p = 2 * m;
    let mut a = Array2::zeros((p, p));
    a.slice_mut(s![..m, ..m]).assign(block);
    plan.inverse(&mut a);
    let mut zx = C64::new(0.0, 0.0);
    let mut zy = C64::new(0.0, 0.0);
    let mut w = 0.0;
    for ((i, j), z) in a.indexed_iter() {
        let v = z.norm_sqr();
        w += v;
        zx += v * C64::from_polar(1.0, 2.0 * PI * j as f64 / p as f64);
        zy += v * C64::from_polar(1.0, 2.0 * PI * i as f64 / p as f64);
    }
    if w <= 0.0 {
        return None;
    }
    // Index offsets of p/2 contribute a factor (-1) to both moments, which
    // the angle of the negated sum absorbs.
    let scale = m as f64 / (2.0 * PI);
    Some(((-zx).arg() * -scale, (-zy).arg() * -scale))
}

pub fn centroid_slopes(pw: &PhaseGrid, layout: &SubapertureLayout) -> Result<SlopeField> {
    centroid_slopes_with(pw, layout, CentroidEstimator::default())
}

/// Slopes of every active subaperture relative to the centred zero-phase
/// reference; inactive or dark subapertures report 0 and are flagged.
pub fn centroid_slopes_with(pw: &PhaseGrid, layout: &SubapertureLayout, est: CentroidEstimator) -> Result<SlopeField> {
    if pw.n() != layout.n {
        return invalid("layout does not match grid size");
    }
    let ns = layout.n_sub;
    let small = Dft2::cached(layout.sub_px);
    let big = Dft2::cached(2 * layout.sub_px);
    let cells: Vec<Option<(f64, f64)>> = (0..ns * ns)
        .into_par_iter()
        .map(|idx| {
            let (j, k) = (idx / ns, idx % ns);
            if !layout.active[[j, k]] {
                return None;
            }
            let b = layout.block(pw, j, k);
            match est {
                CentroidEstimator::PhasorMoment => slope_phasor(&b, &big),
                CentroidEstimator::Modulus => {
                    // Reference response: the same block with zero phase.
                    let mut r = b.mapv(|z| C64::new(z.norm(), 0.0));
                    small.inverse(&mut r);
                    let (rx, ry) = slope_modulus(&r)?;
                    let mut e = b;
                    small.inverse(&mut e);
                    slope_modulus(&e).map(|(x, y)| (x - rx, y - ry))
                }
            }
        })
        .collect();
    let mut sx = Array2::zeros((ns, ns));
    let mut sy = Array2::zeros((ns, ns));
    let mut valid = Array2::from_elem((ns, ns), false);
    for (idx, c) in cells.into_iter().enumerate() {
        if let Some((x, y)) = c {
            let (j, k) = (idx / ns, idx % ns);
            sx[[j, k]] = clean(x);
            sy[[j, k]] = clean(y);
            valid[[j, k]] = true;
        }
    }
    Ok(SlopeField { sx, sy, valid, layout: layout.clone() })
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-13 {
        0.0
    } else {
        x
    }
}

/// Output of slope integration.
#[derive(Debug, Clone)]
pub struct Integrated {
    pub phase: PhaseGrid,
    /// Node values on the subaperture grid (inactive nodes extrapolated).
    pub nodes: Array2<f64>,
    pub components: usize,
    pub iterations: usize,
    pub slope_residuals: Array2<f64>,
}

/// Least-squares integration of a slope field followed by bilinear
/// upsampling to the pixel grid.
pub fn integrate_slopes(sf: &SlopeField) -> Result<Integrated> {
    let l = &sf.layout;
    if !sf.valid.iter().any(|&v| v) {
        return invalid("no active subaperture");
    }
    let ns = l.n_sub;
    // Phase difference between neighbouring centres, sub_px pixels apart,
    // using the mean of the two gradient estimates 2 pi s / sub_px.
    let dx = Array2::from_shape_fn((ns, ns), |(j, k)| if k + 1 < ns { PI * (sf.sx[[j, k]] + sf.sx[[j, k + 1]]) } else { 0.0 });
    let dy = Array2::from_shape_fn((ns, ns), |(j, k)| if j + 1 < ns { PI * (sf.sy[[j, k]] + sf.sy[[j + 1, k]]) } else { 0.0 });
    let sol = integrate_differences(&sf.valid, &dx, &dy, CG_TOL, default_max_iters(&sf.valid));
    let residuals = edge_residuals(&sf.valid, &sol.phi, &dx, &dy);
    let nodes = extrapolate(&sol.phi, &sf.valid);
    let mut up = upsample_bilinear(&nodes, l.sub_px);
    let mu = mask_mean(&up, &l.mask);
    up.zip_mut_with(&l.mask, |v, &m| *v = if m { *v - mu } else { 0.0 });
    Ok(Integrated {
        phase: PhaseGrid { values: up, mask: l.mask.clone(), pitch: 1.0 },
        nodes,
        components: sol.components,
        iterations: sol.iterations,
        slope_residuals: residuals,
    })
}

fn edge_residuals(valid: &Array2<bool>, phi: &Array2<f64>, dx: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let (n0, n1) = valid.dim();
    let mut acc = Array2::<f64>::zeros((n0, n1));
    let mut cnt = Array2::<f64>::zeros((n0, n1));
    for i in 0..n0 {
        for j in 0..n1 {
            if !valid[[i, j]] {
                continue;
            }
            if j + 1 < n1 && valid[[i, j + 1]] {
                let r = (phi[[i, j + 1]] - phi[[i, j]] - dx[[i, j]]).powi(2);
                acc[[i, j]] += r;
                acc[[i, j + 1]] += r;
                cnt[[i, j]] += 1.0;
                cnt[[i, j + 1]] += 1.0;
            }
            if i + 1 < n0 && valid[[i + 1, j]] {
                let r = (phi[[i + 1, j]] - phi[[i, j]] - dy[[i, j]]).powi(2);
                acc[[i, j]] += r;
                acc[[i + 1, j]] += r;
                cnt[[i, j]] += 1.0;
                cnt[[i + 1, j]] += 1.0;
            }
        }
    }
    Array2::from_shape_fn((n0, n1), |(i, j)| if cnt[[i, j]] > 0.0 { (acc[[i, j]] / cnt[[i, j]]).sqrt() } else { 0.0 })
}

/// Fill unknown nodes layer by layer. Each unknown node adjacent to known
/// ones takes the mean of the linear extrapolations 2 u1 - u2 along the
/// axis directions where two known nodes line up, or else the mean of its
/// known neighbours.
pub fn extrapolate(values: &Array2<f64>, known: &Array2<bool>) -> Array2<f64> {
    let (n0, n1) = values.dim();
    let mut v = values.clone();
    let mut k = known.clone();
    if !k.iter().any(|&b| b) {
        return Array2::zeros((n0, n1));
    }
    let dirs: [(i64, i64); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];
    loop {
        let mut updates = Vec::new();
        for i in 0..n0 {
            for j in 0..n1 {
                if k[[i, j]] {
                    continue;
                }
                let get = |di: i64, dj: i64| -> Option<f64> {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= n0 as i64 || b >= n1 as i64 {
                        return None;
                    }
                    let (a, b) = (a as usize, b as usize);
                    if k[[a, b]] {
                        Some(v[[a, b]])
                    } else {
                        None
                    }
                };
                let (mut lin, mut nl, mut near, mut nn) = (0.0, 0, 0.0, 0);
                for &(di, dj) in &dirs {
                    if let Some(u1) = get(di, dj) {
                        near += u1;
                        nn += 1;
                        if let Some(u2) = get(2 * di, 2 * dj) {
                            lin += 2.0 * u1 - u2;
                            nl += 1;
                        }
                    }
                }
                if nl > 0 {
                    updates.push((i, j, lin / nl as f64));
                } else if nn > 0 {
                    updates.push((i, j, near / nn as f64));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, j, x) in updates {
            v[[i, j]] = x;
            k[[i, j]] = true;
        }
    }
    v
}

/// Bilinear interpolation from node centres (cell centres of a `factor`
/// pixel tiling) to every pixel; beyond the outermost centres the edge
/// cells are extended linearly.
pub fn upsample_bilinear(nodes: &Array2<f64>, factor: usize) -> Array2<f64> {
    let ns = nodes.nrows();
    let n = ns * factor;
    let coord = |p: usize| -> (usize, f64) {
        // node coordinate of pixel p
        let u = (p as f64 + 0.5) / factor as f64 - 0.5;
        if ns == 1 {
            return (0, 0.0);
        }
        let i0 = (u.floor().max(0.0) as usize).min(ns - 2);
        (i0, u - i0 as f64)
    };
    Array2::from_shape_fn((n, n), |(p, q)| {
        let (i, ty) = coord(p);
        let (j, tx) = coord(q);
        if ns == 1 {
            return nodes[[0, 0]];
        }
        let a = nodes[[i, j]] * (1.0 - tx) + nodes[[i, j + 1]] * tx;
        let b = nodes[[i + 1, j]] * (1.0 - tx) + nodes[[i + 1, j + 1]] * tx;
        a * (1.0 - ty) + b * ty
    })
}

/// Shack-Hartmann unwrapping: slopes from the digital sensor, then
/// integration.
pub fn unwrap_sh(pw: &PhaseGrid, n_sub: usize) -> Result<UnwrapReport> {
    unwrap_sh_with(pw, n_sub, CentroidEstimator::default())
}

pub fn unwrap_sh_with(pw: &PhaseGrid, n_sub: usize, est: CentroidEstimator) -> Result<UnwrapReport> {
    let t = Instant::now();
    let layout = SubapertureLayout::new(&pw.mask, n_sub)?;
    let sf = centroid_slopes_with(pw, &layout, est)?;
    let it = integrate_slopes(&sf)?;
    let mut rep = UnwrapReport::new("sh", it.phase);
    rep.iterations = it.iterations;
    rep.diagnostics.insert("n_sub".into(), n_sub as f64);
    rep.diagnostics.insert("components".into(), it.components as f64);
    rep.diagnostics.insert("active_subapertures".into(), sf.valid.iter().filter(|&&v| v).count() as f64);
    if it.components > 1 {
        rep.warnings.push(format!("active subapertures form {} disconnected groups", it.components));
    }
    rep.slope_residuals = Some(it.slope_residuals);
    rep.runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(rep)
}
