//! Rotated procedural glyphs.
//!
//! Eight stencils are drawn on a square canvas in a coordinate frame whose
//! unit is 1/28 of the canvas side, so the shapes scale with `image_size`.
//! Each sample is a stencil rotated about the canvas center by bilinear
//! resampling, shifted by an integer translation and perturbed by clipped
//! Gaussian pixel noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ConfoundLabels, DatasetBundle};
use crate::error::{Error, Result};

pub const DEFAULT_MASS_OFFSET: f64 = 3.0;
pub const DEFAULT_GLYPH_SCALE: f64 = 0.8;

pub const GLYPH_NAMES: [&str; 8] = [
    "vertical-bar",
    "tee",
    "cross",
    "l-corner",
    "hollow-square",
    "diagonal-stroke",
    "triangle-outline",
    "notched-disk",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlyphMode {
    /// Interest label is the rotation index over `angles` evenly spaced
    /// angles; the confound is the glyph identity.
    Discrete { angles: usize },
    /// Interest label is the glyph identity; the confound is the rotation
    /// angle drawn uniformly from `[0, 60]` degrees and stored as angle / 60.
    Continuous,
}

#[derive(Clone, Debug)]
pub struct RotatedGlyphs {
    pub mode: GlyphMode,
    pub glyphs: usize,
    /// Samples per (angle, glyph) cell in discrete mode, per glyph in
    /// continuous mode.
    pub n_per_cell: usize,
    pub image_size: usize,
    /// Maximum absolute integer translation, in pixels.
    pub jitter_px: i32,
    pub pixel_noise: f64,
    /// Every stencil is scaled by `glyph_scale` and placed so that its
    /// center of mass sits this many pixels (at 28 px) below the image
    /// center.
    pub mass_offset: f64,
    pub glyph_scale: f64,
    pub seed: u64,
}

impl Default for RotatedGlyphs {
    fn default() -> Self {
        RotatedGlyphs {
            mode: GlyphMode::Discrete { angles: 5 },
            glyphs: 6,
            n_per_cell: 300,
            image_size: 28,
            jitter_px: 2,
            pixel_noise: 0.05,
            mass_offset: DEFAULT_MASS_OFFSET,
            glyph_scale: DEFAULT_GLYPH_SCALE,
            seed: 0,
        }
    }
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

fn in_rect(x: f64, y: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
    (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
}

/// Stencil membership at `(x, y)` in glyph units; y grows downward.
///
/// Strokes are bold so that a few pixels of translation change a glyph far
/// less than a rotation does, and every stencil is heavier at one end so
/// that no rotation other than the full turn maps it onto itself.
fn inside(glyph: usize, x: f64, y: f64) -> bool {
    // half-width growing linearly from `top` at y=-9 to `bottom` at y=9
    let taper = |top: f64, bottom: f64| top + (bottom - top) * ((y + 9.0) / 18.0).clamp(0.0, 1.0);
    match glyph {
        0 => (-9.0..=9.0).contains(&y) && x.abs() <= taper(1.5, 4.0),
        1 => in_rect(x, y, -8.5, 8.5, -9.0, -4.5) || in_rect(x, y, -2.25, 2.25, -9.0, 9.0),
        2 => in_rect(x, y, -2.25, 2.25, -9.0, 9.0) || in_rect(x, y, -7.5, 7.5, -6.0, -2.0),
        3 => in_rect(x, y, -7.5, -3.0, -9.0, 9.0) || in_rect(x, y, -7.5, 7.5, 4.5, 9.0),
        4 => {
            let outer = x.abs() <= 8.5 && (-8.5..=8.5).contains(&y);
            let hole = x.abs() < 5.0 && (-5.0..0.0).contains(&y);
            outer && !hole
        }
        5 => {
            let (a, b) = ((-7.0, -7.0), (7.0, 7.0));
            let t = (((x - a.0) + (y - a.1)) / 28.0).clamp(0.0, 1.0);
            segment_distance(x, y, a, b) <= 1.5 + 2.5 * t
        }
        6 => {
            let v = [(0.0, -9.0), (-6.5, 8.0), (6.5, 8.0)];
            (0..3).any(|i| segment_distance(x, y, v[i], v[(i + 1) % 3]) <= 1.8)
        }
        7 => x * x + y * y <= 72.25 && !in_rect(x, y, -2.5, 2.5, -9.0, -2.0),
        _ => false,
    }
}

/// Center of mass of a stencil in glyph units.
fn stencil_mass_center(glyph: usize) -> (f64, f64) {
    let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
    for i in 0..280 {
        for j in 0..280 {
            let (x, y) = (
                -14.0 + (j as f64 + 0.5) * 0.1,
                -14.0 + (i as f64 + 0.5) * 0.1,
            );
            if inside(glyph, x, y) {
                sx += x;
                sy += y;
                m += 1.0;
            }
        }
    }
    if m == 0.0 {
        (0.0, 0.0)
    } else {
        (sx / m, sy / m)
    }
}

/// Renders an unrotated stencil at the default placement with 4x4
/// supersampling; values in `[0, 1]`.
pub fn render_glyph(glyph: usize, size: usize) -> Array2<f64> {
    render_placed(glyph, size, DEFAULT_GLYPH_SCALE, DEFAULT_MASS_OFFSET)
}

fn render_placed(glyph: usize, size: usize, scale_factor: f64, mass_offset: f64) -> Array2<f64> {
    const SS: usize = 4;
    let scale = 28.0 / size as f64;
    let center = (size as f64 - 1.0) / 2.0;
    // glyph-unit point that lands on the canvas center
    let (mx, my) = stencil_mass_center(glyph);
    let (ox, oy) = (mx, my - mass_offset / scale_factor);
    Array2::from_shape_fn((size, size), |(r, c)| {
        let mut hits = 0;
        for sr in 0..SS {
            for sc in 0..SS {
                let py = r as f64 + (sr as f64 + 0.5) / SS as f64 - 0.5;
                let px = c as f64 + (sc as f64 + 0.5) / SS as f64 - 0.5;
                let gx = (px - center) * scale / scale_factor + ox;
                let gy = (py - center) * scale / scale_factor + oy;
                if inside(glyph, gx, gy) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SS * SS) as f64
    })
}

fn bilinear(img: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = img.dim();
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            img[[r as usize, c as usize]]
        }
    };
    at(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + at(y0, x0 + 1.0) * (1.0 - fy) * fx
        + at(y0 + 1.0, x0) * fy * (1.0 - fx)
        + at(y0 + 1.0, x0 + 1.0) * fy * fx
}

/// Rotates counter-clockwise (as displayed) by `degrees` about the center,
/// then shifts by `(dy, dx)` whole pixels with zero fill.
fn rotate_and_shift(img: &Array2<f64>, degrees: f64, dy: i32, dx: i32) -> Array2<f64> {
    let (h, w) = img.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    Array2::from_shape_fn((h, w), |(r, col)| {
        let oy = (r as i64 - dy as i64) as f64 - cy;
        let ox = (col as i64 - dx as i64) as f64 - cx;
        // inverse map of the displayed rotation (rows grow downward)
        let sx = c * ox - s * oy;
        let sy = s * ox + c * oy;
        bilinear(img, sy + cy, sx + cx)
    })
}

pub fn generate_rotated_glyphs(p: &RotatedGlyphs) -> Result<DatasetBundle> {
    if p.glyphs == 0 || p.glyphs > GLYPH_NAMES.len() {
        return Err(Error::invalid(format!(
            "glyph count must be in 1..={}, got {}",
            GLYPH_NAMES.len(),
            p.glyphs
        )));
    }
    if p.image_size < 16 {
        return Err(Error::invalid("image_size must be at least 16"));
    }
    if p.n_per_cell == 0 {
        return Err(Error::invalid("n_per_cell must be positive"));
    }
    if p.pixel_noise < 0.0 || p.jitter_px < 0 {
        return Err(Error::invalid("jitter and noise must be nonnegative"));
    }
    let stencils: Vec<Array2<f64>> = (0..p.glyphs)
        .map(|g| render_placed(g, p.image_size, p.glyph_scale, p.mass_offset))
        .collect();
    let d = p.image_size * p.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // sigma 0 is a valid Normal; it yields exact zeros
    let noise = Normal::new(0.0, p.pixel_noise).expect("nonnegative sigma");

    let sample = |glyph: usize, degrees: f64, rng: &mut ChaCha8Rng| -> Vec<f32> {
        let dy = rng.random_range(-p.jitter_px..=p.jitter_px);
        let dx = rng.random_range(-p.jitter_px..=p.jitter_px);
        let img = rotate_and_shift(&stencils[glyph], degrees, dy, dx);
        img.iter()
            .map(|&v| (v + noise.sample(rng)).clamp(0.0, 1.0) as f32)
            .collect()
    };

    let mut pixels = Vec::new();
    let mut y = Vec::new();
    let (confound, k_clusters) = match p.mode {
        GlyphMode::Discrete { angles } => {
            if angles == 0 {
                return Err(Error::invalid("need at least one rotation angle"));
            }
            let mut c = Vec::new();
            for g in 0..p.glyphs {
                for k in 0..angles {
                    let degrees = 360.0 * k as f64 / angles as f64;
                    for _ in 0..p.n_per_cell {
                        pixels.extend(sample(g, degrees, &mut rng));
                        y.push(k as u32);
                        c.push(g as u32);
                    }
                }
            }
            (ConfoundLabels::discrete(c, p.glyphs), angles)
        }
        GlyphMode::Continuous => {
            let mut c = Vec::new();
            for g in 0..p.glyphs {
                for _ in 0..p.n_per_cell {
                    let degrees: f64 = rng.random_range(0.0..=60.0);
                    pixels.extend(sample(g, degrees, &mut rng));
                    y.push(g as u32);
                    c.push((degrees / 60.0) as f32);
                }
            }
            (ConfoundLabels::continuous(c), p.glyphs)
        }
    };
    let n = y.len();
    let x = Array2::from_shape_vec((n, d), pixels).expect("pixel count matches shape");
    DatasetBundle::new(x, Some(y), confound, k_clusters)
}
