//! Classical unwrappers: column-wise Itoh, reliability-sorted MRP and
//! least-squares Poisson (PE).
//!
//! By default they see the whole N x N image, outside-aperture pixels
//! included (zero after masking), as image-based unwrappers do. `Domain::Mask`
//! restricts them to the aperture instead.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::fft::Dct2;
use crate::grid::{remove_piston, PhaseGrid};
use crate::lsq::{default_max_iters, integrate_differences, CG_TOL};
use crate::optics::wrap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Domain {
    #[default]
    Grid,
    Mask,
}

fn domain_mask(pw: &PhaseGrid, d: Domain) -> Array2<bool> {
    match d {
        Domain::Grid => Array2::from_elem(pw.values.dim(), true),
        Domain::Mask => pw.mask.clone(),
    }
}

fn zero_outside(v: &mut Array2<f64>, mask: &Array2<bool>) {
    v.zip_mut_with(mask, |x, &m| {
        if !m {
            *x = 0.0
        }
    });
}

/// Itoh unwrapping down each column. The first domain pixel of each column
/// is itself Itoh-unwrapped across columns, so congruent inputs come back
/// up to one global 2 pi multiple. In `Mask` mode each contiguous run of
/// aperture pixels below the first is unwrapped on its own.
pub fn unwrap_columnwise(pw: &PhaseGrid) -> PhaseGrid {
    unwrap_columnwise_in(pw, Domain::Grid)
}

pub fn unwrap_columnwise_in(pw: &PhaseGrid, d: Domain) -> PhaseGrid {
    let v = pw.masked_values();
    let dom = domain_mask(pw, d);
    let (n0, n1) = v.dim();
    let mut out = v.clone();
    let mut prev: Option<(f64, f64)> = None;
    for j in 0..n1 {
        if let Some(i) = (0..n0).find(|&i| dom[[i, j]]) {
            if let Some((p, pv)) = prev {
                out[[i, j]] = p + wrap(v[[i, j]] - pv);
            }
            prev = Some((out[[i, j]], v[[i, j]]));
        }
        for i in 1..n0 {
            if dom[[i, j]] && dom[[i - 1, j]] {
                out[[i, j]] = out[[i - 1, j]] + wrap(v[[i, j]] - v[[i - 1, j]]);
            }
        }
    }
    zero_outside(&mut out, &pw.mask);
    pw.with_values(out)
}

/// Per-pixel reliability 1 / sqrt(H^2 + V^2 + D1^2 + D2^2) from wrapped
/// second differences. Pixels on the image border take the smallest
/// reliability found among computable pixels of their 3 x 3 neighbourhood.
pub fn reliability_map(v: &Array2<f64>) -> Array2<f64> {
    let (n0, n1) = v.dim();
    let mut r = Array2::from_elem((n0, n1), f64::NAN);
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            let c = v[[i, j]];
            let sd = |a: f64, b: f64| wrap(a - c) - wrap(c - b);
            let h = sd(v[[i, j - 1]], v[[i, j + 1]]);
            let vv = sd(v[[i - 1, j]], v[[i + 1, j]]);
            let d1 = sd(v[[i - 1, j - 1]], v[[i + 1, j + 1]]);
            let d2 = sd(v[[i - 1, j + 1]], v[[i + 1, j - 1]]);
            let d = (h * h + vv * vv + d1 * d1 + d2 * d2).sqrt();
            r[[i, j]] = if d > 0.0 { 1.0 / d } else { f64::INFINITY };
        }
    }
    let global_min = r.iter().filter(|x| !x.is_nan()).cloned().fold(f64::INFINITY, f64::min);
    let global_min = if global_min.is_finite() { global_min } else { 1.0 };
    let mut out = r.clone();
    for i in 0..n0 {
        for j in 0..n1 {
            if !r[[i, j]].is_nan() {
                continue;
            }
            let mut m = f64::INFINITY;
            for a in i.saturating_sub(1)..(i + 2).min(n0) {
                for b in j.saturating_sub(1)..(j + 2).min(n1) {
                    let x = r[[a, b]];
                    if !x.is_nan() {
                        m = m.min(x);
                    }
                }
            }
            out[[i, j]] = if m.is_finite() { m } else { global_min };
        }
    }
    out
}

/// Reliability-guided unwrapping with a non-continuous path: edges are
/// processed from most to least reliable (ties by row-major edge index) and
/// the smaller of two groups is shifted by a multiple of 2 pi on merging.
pub fn unwrap_mrp(pw: &PhaseGrid) -> PhaseGrid {
    unwrap_mrp_in(pw, Domain::Grid)
}

pub fn unwrap_mrp_in(pw: &PhaseGrid, d: Domain) -> PhaseGrid {
    let v = pw.masked_values();
    let dom = domain_mask(pw, d);
    let (n0, n1) = v.dim();
    let rel = reliability_map(&v);
    let idx = |i: usize, j: usize| i * n1 + j;
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n0 {
        for j in 0..n1 {
            if !dom[[i, j]] {
                continue;
            }
            if j + 1 < n1 && dom[[i, j + 1]] {
                edges.push((rel[[i, j]] + rel[[i, j + 1]], idx(i, j), idx(i, j + 1)));
            }
            if i + 1 < n0 && dom[[i + 1, j]] {
                edges.push((rel[[i, j]] + rel[[i + 1, j]], idx(i, j), idx(i + 1, j)));
            }
        }
    }
    // stable sort keeps the row-major order among equal reliabilities
    edges.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut u: Vec<f64> = v.iter().copied().collect();
    let mut group: Vec<usize> = (0..n0 * n1).collect();
    let mut members: Vec<Vec<usize>> = (0..n0 * n1).map(|k| vec![k]).collect();
    for &(_, a, b) in &edges {
        let (ga, gb) = (group[a], group[b]);
        if ga == gb {
            continue;
        }
        let m = ((u[a] - u[b]) / (2.0 * PI)).round();
        let (keep, moved, shift) = if members[ga].len() >= members[gb].len() { (ga, gb, m) } else { (gb, ga, -m) };
        let list = std::mem::take(&mut members[moved]);
        for &p in &list {
            u[p] += 2.0 * PI * shift;
            group[p] = keep;
        }
        members[keep].extend(list);
    }
    let mut out = Array2::from_shape_vec((n0, n1), u).expect("shape");
    zero_outside(&mut out, &pw.mask);
    pw.with_values(out)
}

/// Least-squares unwrapping: Poisson equation of the wrapped gradients with
/// Neumann boundaries, solved by cosine transform (or by conjugate gradients
/// on the aperture graph in `Mask` mode). Output is piston-free over the
/// aperture.
pub fn unwrap_pe(pw: &PhaseGrid) -> PhaseGrid {
    unwrap_pe_in(pw, Domain::Grid)
}

pub fn unwrap_pe_in(pw: &PhaseGrid, d: Domain) -> PhaseGrid {
    let v = pw.masked_values();
    let (n0, n1) = v.dim();
    let dx = Array2::from_shape_fn((n0, n1), |(i, j)| if j + 1 < n1 { wrap(v[[i, j + 1]] - v[[i, j]]) } else { 0.0 });
    let dy = Array2::from_shape_fn((n0, n1), |(i, j)| if i + 1 < n0 { wrap(v[[i + 1, j]] - v[[i, j]]) } else { 0.0 });
    let mut out = match d {
        Domain::Mask => integrate_differences(&pw.mask, &dx, &dy, CG_TOL, default_max_iters(&pw.mask)).phi,
        Domain::Grid => poisson_neumann(&dx, &dy),
    };
    remove_piston(&mut out, &pw.mask);
    pw.with_values(out)
}

/// Solve the Neumann Poisson problem whose right-hand side is the divergence
/// of (dx, dy); dx[:, n-1] and dy[n-1, :] must be zero.
pub fn poisson_neumann(dx: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let n = dx.nrows();
    let mut rho = Array2::from_shape_fn((n, n), |(i, j)| {
        let mut r = dx[[i, j]] + dy[[i, j]];
        if j > 0 {
            r -= dx[[i, j - 1]];
        }
        if i > 0 {
            r -= dy[[i - 1, j]];
        }
        r
    });
    let dct = Dct2::new(n);
    dct.forward(&mut rho);
    for i in 0..n {
        for j in 0..n {
            let den = 2.0 * (PI * i as f64 / n as f64).cos() + 2.0 * (PI * j as f64 / n as f64).cos() - 4.0;
            rho[[i, j]] = if i == 0 && j == 0 { 0.0 } else { rho[[i, j]] / den };
        }
    }
    dct.inverse(&mut rho);
    rho
}
