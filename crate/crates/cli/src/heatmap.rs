//! PNG heatmap export with a text sidecar carrying the colour scale.

use dwfs::PhaseGrid;

/// Viridis anchor colours at 0, 1/4, 1/2, 3/4 and 1.
const ANCHORS: [[f64; 3]; 5] = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
const OUTSIDE: [u8; 3] = [255, 255, 255];
const TICKS: usize = 5;

fn colour(t: f64) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let k = (x.floor() as usize).min(ANCHORS.len() - 2);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (ANCHORS[k][c] + f * (ANCHORS[k + 1][c] - ANCHORS[k][c])).round() as u8;
    }
    out
}

/// In-aperture value range; (0, 0) for an empty aperture.
fn range(g: &PhaseGrid) -> (f64, f64) {
    let vals = g.values.iter().zip(g.mask.iter()).filter(|(_, &m)| m).map(|(v, _)| *v);
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

/// Encode `g` as an RGB PNG scaled linearly between its in-aperture
/// min and max; pixels outside the aperture are white.
pub fn render(g: &PhaseGrid) -> Result<(Vec<u8>, String), png::EncodingError> {
    let n = g.n();
    let (lo, hi) = range(g);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut rgb = Vec::with_capacity(3 * n * n);
    for (v, &m) in g.values.iter().zip(g.mask.iter()) {
        rgb.extend_from_slice(&if m { colour((v - lo) / span) } else { OUTSIDE });
    }
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, n as u32, n as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&rgb)?;
        w.finish()?;
    }
    let mut side = format!("colormap = viridis (linear)\nmin = {lo}\nmax = {hi}\n");
    for k in 0..TICKS {
        let t = k as f64 / (TICKS - 1) as f64;
        side.push_str(&format!("tick_{k} = {}\n", lo + t * (hi - lo)));
    }
    Ok((bytes, side))
}
