//! Procedural image families and near-duplicate perturbations.
//!
//! Damage scenes blend an intact green/blue scene with gray/brown rubble by
//! a damage level and scatter debris in proportion to it; the class ranges
//! of that level overlap so the classes are not trivially separable. Scene
//! channel values stay in `[40, 215]`. Irrelevant banners are flat,
//! saturated cards whose pixels mostly sit at 0 or 255 in some channel.
//! A random low-frequency layout gives every base a distinct hash.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imagecore::{resize_area, Channels, LumaPlane, Raster};
use crate::record::DamageLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Severe,
    Mild,
    Intact,
    Banner,
}

impl Family {
    pub fn damage(self) -> DamageLabel {
        match self {
            Family::Severe => DamageLabel::Severe,
            Family::Mild => DamageLabel::Mild,
            Family::Intact | Family::Banner => DamageLabel::None,
        }
    }

    pub fn is_relevant(self) -> bool {
        self != Family::Banner
    }

    fn damage_range(self) -> (f64, f64) {
        match self {
            Family::Severe => (0.55, 1.0),
            Family::Mild => (0.3, 0.75),
            Family::Intact | Family::Banner => (0.0, 0.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseRecipe {
    pub family: Family,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Resize,
    Crop,
    Brightness,
    TextBand,
    Blur,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Resize,
        PerturbationKind::Crop,
        PerturbationKind::Brightness,
        PerturbationKind::TextBand,
        PerturbationKind::Blur,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Resize => "resize",
            PerturbationKind::Crop => "crop",
            PerturbationKind::Brightness => "brightness",
            PerturbationKind::TextBand => "text-band",
            PerturbationKind::Blur => "blur",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation {s:?}"))
    }
}

/// A concrete edit applied to a base image to make a near-duplicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    Resize { scale: f64 },
    /// Fraction of the width/height removed from each side.
    Crop { left: f64, top: f64, right: f64, bottom: f64 },
    /// Multiplicative gain applied to every channel.
    Brightness { gain: f64 },
    /// Overlay band with fake glyphs; position and height are fractions of
    /// the image height.
    TextBand { top: f64, height: f64, seed: u64 },
    Blur { radius: usize },
}

impl Perturbation {
    pub fn kind(&self) -> PerturbationKind {
        match self {
            Perturbation::Resize { .. } => PerturbationKind::Resize,
            Perturbation::Crop { .. } => PerturbationKind::Crop,
            Perturbation::Brightness { .. } => PerturbationKind::Brightness,
            Perturbation::TextBand { .. } => PerturbationKind::TextBand,
            Perturbation::Blur { .. } => PerturbationKind::Blur,
        }
    }

    /// Draws parameters for `kind` with strength `t ∈ [0, 1]`.
    pub fn sample(kind: PerturbationKind, t: f64, rng: &mut impl Rng) -> Perturbation {
        match kind {
            PerturbationKind::Resize => {
                let s = 1.0 + 0.5 * t;
                Perturbation::Resize {
                    scale: if rng.gen_bool(0.5) { s } else { 1.0 / s },
                }
            }
            PerturbationKind::Crop => {
                let mut side = || rng.gen_range(0.0..=0.1 * t);
                Perturbation::Crop {
                    left: side(),
                    top: side(),
                    right: side(),
                    bottom: side(),
                }
            }
            PerturbationKind::Brightness => {
                let mag = 0.03 + 0.12 * t;
                Perturbation::Brightness {
                    gain: if rng.gen_bool(0.5) { 1.0 + mag } else { 1.0 - mag },
                }
            }
            PerturbationKind::TextBand => {
                let height = 0.06 + 0.14 * t;
                Perturbation::TextBand {
                    top: rng.gen_range(0.0..=1.0 - height),
                    height,
                    seed: rng.gen(),
                }
            }
            PerturbationKind::Blur => Perturbation::Blur {
                radius: 1 + (t * 2.0).round() as usize,
            },
        }
    }

    pub fn apply(&self, img: &Raster) -> Raster {
        match *self {
            Perturbation::Resize { scale } => {
                let w = ((img.width() as f64 * scale).round() as usize).max(8);
                let h = ((img.height() as f64 * scale).round() as usize).max(8);
                resize_rgb(img, w, h)
            }
            Perturbation::Crop { left, top, right, bottom } => {
                let (w, h) = (img.width() as f64, img.height() as f64);
                let x0 = (w * left).floor() as usize;
                let y0 = (h * top).floor() as usize;
                let x1 = (img.width() - (w * right).floor() as usize).max(x0 + 1);
                let y1 = (img.height() - (h * bottom).floor() as usize).max(y0 + 1);
                Raster::from_rgb_fn(x1 - x0, y1 - y0, |x, y| img.rgb(x0 + x, y0 + y)).expect("non-empty crop")
            }
            Perturbation::Brightness { gain } => {
                let data = img.data().iter().map(|&v| (f64::from(v) * gain).round().min(255.0) as u8).collect();
                Raster::new(img.width(), img.height(), img.channels(), data).expect("same shape")
            }
            Perturbation::TextBand { top, height, seed } => text_band(img, top, height, seed),
            Perturbation::Blur { radius } => box_blur_rgb(img, radius),
        }
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

/// Random smooth field in `[0, 1]` built from a few low-order cosines.
fn layout(rng: &mut impl Rng, w: usize, h: usize) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                f64::from(rng.gen_range(1..=5u8)),
                f64::from(rng.gen_range(0..=5u8)),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let pi = std::f64::consts::PI;
    let mut field = vec![0.0; w * h];
    for (a, fx, fy, px, py) in terms {
        let cx: Vec<f64> = (0..w).map(|x| (pi * fx * x as f64 / w as f64 + px).cos()).collect();
        for y in 0..h {
            let cy = a * (pi * fy * y as f64 / h as f64 + py).cos();
            for x in 0..w {
                field[y * w + x] += cx[x] * cy;
            }
        }
    }
    let (lo, hi) = field.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-9);
    field.iter_mut().for_each(|v| *v = (*v - lo) / span);
    field
}

fn scene(recipe: &BaseRecipe, rng: &mut impl Rng) -> Raster {
    let (w, h) = (recipe.width, recipe.height);
    let (lo, hi) = recipe.family.damage_range();
    let level = rng.gen_range(lo..=hi);
    let field = layout(rng, w, h);
    let (green, blue) = ([50.0, 120.0, 60.0], [120.0, 170.0, 215.0]);
    let (gray, brown) = ([95.0, 90.0, 85.0], [165.0, 125.0, 85.0]);
    let mut px: Vec<[f64; 3]> = field
        .iter()
        .map(|&l| {
            let base = lerp3(lerp3(green, blue, l), lerp3(gray, brown, l), level);
            let n = 30.0 * level;
            base.map(|c| c + rng.gen_range(-n..=n))
        })
        .collect();
    let debris = (level * level * 80.0) as usize;
    for _ in 0..debris {
        let (dw, dh) = (rng.gen_range(2..8), rng.gen_range(2..8));
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let g = rng.gen_range(60.0..200.0);
        let color = [g, g * 0.9, g * 0.8];
        for y in y0..(y0 + dh).min(h) {
            for x in x0..(x0 + dw).min(w) {
                px[y * w + x] = color;
            }
        }
    }
    Raster::from_rgb_fn(w, h, |x, y| px[y * w + x].map(|c| c.round().clamp(48.0, 207.0) as u8)).expect("valid size")
}

/// Saturated colors: every pixel keeps a channel at 0 under any gain.
const BANNER_COLORS: [[u8; 3]; 6] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [0, 255, 255],
    [255, 0, 255],
];

fn banner(recipe: &BaseRecipe, rng: &mut impl Rng) -> Raster {
    let (w, h) = (recipe.width, recipe.height);
    let mut px = vec![BANNER_COLORS[rng.gen_range(0..BANNER_COLORS.len())]; w * h];
    let fill = |px: &mut Vec<[u8; 3]>, x0: usize, y0: usize, x1: usize, y1: usize, c: [u8; 3]| {
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                px[y * w + x] = c;
            }
        }
    };
    for _ in 0..rng.gen_range(2..=4) {
        let (x0, y0) = (rng.gen_range(0..w - 8), rng.gen_range(0..h - 8));
        let (x1, y1) = (rng.gen_range(x0 + 8..=w), rng.gen_range(y0 + 8..=h));
        let c = BANNER_COLORS[rng.gen_range(0..BANNER_COLORS.len())];
        fill(&mut px, x0, y0, x1, y1, c);
    }
    for _ in 0..rng.gen_range(2..=5) {
        let y = rng.gen_range(0..h - 6);
        let ink = if rng.gen_bool(0.5) { [0, 0, 0] } else { [255, 255, 255] };
        let mut x = rng.gen_range(0..w / 4);
        let end = rng.gen_range(w / 2..w);
        while x + 3 < end {
            let cw = rng.gen_range(2..5);
            fill(&mut px, x, y, x + cw, y + 5, ink);
            x += cw + rng.gen_range(1..4);
        }
    }
    Raster::from_rgb_fn(w, h, |x, y| px[y * w + x]).expect("valid size")
}

pub fn render_base(recipe: &BaseRecipe) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    match recipe.family {
        Family::Banner => banner(recipe, &mut rng),
        _ => scene(recipe, &mut rng),
    }
}

fn channel_planes(img: &Raster) -> Vec<LumaPlane> {
    (0..3)
        .map(|ch| {
            let mut data = Vec::with_capacity(img.width() * img.height());
            for y in 0..img.height() {
                for x in 0..img.width() {
                    data.push(f64::from(img.rgb(x, y)[ch]));
                }
            }
            LumaPlane::from_samples(img.width(), img.height(), data).expect("samples in range")
        })
        .collect()
}

fn from_planes(planes: &[LumaPlane]) -> Raster {
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for p in planes {
            data.push(p.data()[i].round().clamp(0.0, 255.0) as u8);
        }
    }
    Raster::new(w, h, Channels::Rgb, data).expect("valid shape")
}

fn resize_rgb(img: &Raster, w: usize, h: usize) -> Raster {
    let planes: Vec<LumaPlane> = channel_planes(img).iter().map(|p| resize_area(p, w, h)).collect();
    from_planes(&planes)
}

fn box_blur_rgb(img: &Raster, radius: usize) -> Raster {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let mut sum = [0u32; 3];
            let mut n = 0;
            for yy in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                for xx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    let p = img.rgb(xx, yy);
                    for c in 0..3 {
                        sum[c] += u32::from(p[c]);
                    }
                    n += 1;
                }
            }
            out.extend(sum.map(|s| ((s + n / 2) / n) as u8));
        }
    }
    Raster::new(w, h, Channels::Rgb, out).expect("same shape")
}

fn text_band(img: &Raster, top: f64, height: f64, seed: u64) -> Raster {
    let (w, h) = (img.width(), img.height());
    let y0 = (top * h as f64) as usize;
    let y1 = ((top + height) * h as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glyph = vec![false; w];
    let mut x = 2;
    while x + 3 < w {
        let cw = rng.gen_range(2..5);
        glyph[x..x + cw].iter_mut().for_each(|g| *g = true);
        x += cw + rng.gen_range(1..3);
    }
    let band_h = y1.saturating_sub(y0).max(1);
    Raster::from_rgb_fn(w, h, |x, y| {
        if y < y0 || y >= y1 {
            return img.rgb(x, y);
        }
        let inner = y - y0;
        if glyph[x] && inner > band_h / 4 && inner < band_h - band_h / 4 {
            [200, 200, 200]
        } else {
            [64, 64, 64]
        }
    })
    .expect("same shape")
}
