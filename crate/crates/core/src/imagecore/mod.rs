//! Raster containers and the deterministic transforms that feed hashing and
//! feature extraction: luma conversion, a clamped 7×7 box blur, area-average
//! resampling and a 32×32 orthonormal DCT-II.
//!
//! Every transform is a pure function over immutable inputs. Luma samples stay
//! in `f64` across the chain; nothing is re-quantized to 8 bits between stages.

pub mod netpbm;

use std::sync::OnceLock;

use thiserror::Error;

/// Side length of the DCT input plane.
pub const DCT_SIZE: usize = 32;

/// BT.601 luma weights.
const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const BLUR_RADIUS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("sample buffer has {actual} bytes, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("luma sample {value} at index {index} is outside [0, 255]")]
    LumaRange { index: usize, value: f64 },
    #[error("DCT input must be {DCT_SIZE}x{DCT_SIZE}, got {width}x{height}")]
    DctShape { width: usize, height: usize },
    #[error("netpbm decode failed at byte {offset}: {reason}")]
    Netpbm { offset: usize, reason: String },
    #[error("unrecognized image format")]
    UnknownFormat,
    #[cfg(feature = "codecs")]
    #[error("codec error: {0}")]
    Codec(String),
}

/// Pixel layout of a [`Raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channels {
    Luma = 1,
    Rgb = 3,
}

impl Channels {
    pub fn count(self) -> usize {
        self as usize
    }

    pub fn from_count(n: usize) -> Result<Self, ImageError> {
        match n {
            1 => Ok(Channels::Luma),
            3 => Ok(Channels::Rgb),
            other => Err(ImageError::Channels(other)),
        }
    }
}

/// Row-major 8-bit raster, either single-channel luma or interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: Channels,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster { width, height });
        }
        let expected = width * height * channels.count();
        if data.len() != expected {
            return Err(ImageError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an RGB raster by evaluating `f(x, y)` for every pixel.
    pub fn from_rgb_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, Channels::Rgb, data)
    }

    /// A raster filled with one gray value.
    pub fn constant_luma(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, Channels::Luma, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// RGB triple at `(x, y)`; luma rasters replicate the sample.
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        match self.channels {
            Channels::Luma => {
                let v = self.data[i];
                [v, v, v]
            }
            Channels::Rgb => {
                let p = &self.data[i * 3..i * 3 + 3];
                [p[0], p[1], p[2]]
            }
        }
    }
}

/// Real-valued luminance plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LumaPlane {
    /// Wraps existing samples. Samples must be finite and within `[0, 255]`.
    pub fn from_samples(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::DataLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=255.0).contains(*v))
        {
            return Err(ImageError::LumaRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// 32×32 grid of DCT-II coefficients. `coeff(u, v)` pairs `u` with the
/// horizontal (x) axis and `v` with the vertical (y) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DctGrid {
    data: Box<[f64; DCT_SIZE * DCT_SIZE]>,
}

impl DctGrid {
    pub fn coeff(&self, u: usize, v: usize) -> f64 {
        self.data[u * DCT_SIZE + v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..]
    }

    /// The 8×8 low-frequency block at `(1, 1)..=(8, 8)`, ordered with
    /// index `8 * r + c` holding `coeff(r + 1, c + 1)`.
    pub fn low_frequency_block(&self) -> [f64; 64] {
        let mut out = [0.0; 64];
        for r in 0..8 {
            for c in 0..8 {
                out[8 * r + c] = self.coeff(r + 1, c + 1);
            }
        }
        out
    }
}

pub fn to_luma(img: &Raster) -> LumaPlane {
    let data = match img.channels {
        Channels::Luma => img.data.iter().map(|&v| f64::from(v)).collect(),
        Channels::Rgb => img
            .data
            .chunks_exact(3)
            .map(|p| {
                LUMA_WEIGHTS[0] * f64::from(p[0])
                    + LUMA_WEIGHTS[1] * f64::from(p[1])
                    + LUMA_WEIGHTS[2] * f64::from(p[2])
            })
            .collect(),
    };
    LumaPlane {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Inclusive window `[lo, hi]` of radius `r` around `i`, clamped to `0..n`.
fn clamped_window(i: usize, r: usize, n: usize) -> (usize, usize) {
    (i.saturating_sub(r), (i + r).min(n - 1))
}

/// 7×7 mean filter. Windows are clipped at the borders and the divisor is
/// the number of in-bounds samples.
pub fn box_blur7(p: &LumaPlane) -> LumaPlane {
    let (w, h) = (p.width, p.height);

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &p.data[y * w..(y + 1) * w];
        for x in 0..w {
            let (lo, hi) = clamped_window(x, BLUR_RADIUS, w);
            horiz[y * w + x] = row[lo..=hi].iter().sum();
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (ylo, yhi) = clamped_window(y, BLUR_RADIUS, h);
        let ny = (yhi - ylo + 1) as f64;
        for x in 0..w {
            let (xlo, xhi) = clamped_window(x, BLUR_RADIUS, w);
            let nx = (xhi - xlo + 1) as f64;
            let sum: f64 = (ylo..=yhi).map(|yy| horiz[yy * w + x]).sum();
            // Clamp guards against the last ulp drifting past 255.
            out[y * w + x] = (sum / (nx * ny)).clamp(0.0, 255.0);
        }
    }
    LumaPlane {
        width: w,
        height: h,
        data: out,
    }
}

/// For each output cell along one axis, the input indices that overlap its
/// back-projected interval and the length of each overlap.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let start = (o * n_in) as f64 / n_out as f64;
            let end = ((o + 1) * n_in) as f64 / n_out as f64;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = end.min((i + 1) as f64) - start.max(i as f64);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Exact area-average ("pixel mixing") resampling.
pub fn resize_area(p: &LumaPlane, out_w: usize, out_h: usize) -> LumaPlane {
    assert!(out_w >= 1 && out_h >= 1, "output size must be at least 1x1");
    let wx = area_weights(p.width, out_w);
    let wy = area_weights(p.height, out_h);

    let mut horiz = vec![0.0; out_w * p.height];
    for y in 0..p.height {
        let row = &p.data[y * p.width..(y + 1) * p.width];
        for (ox, weights) in wx.iter().enumerate() {
            horiz[y * out_w + ox] = weights.iter().map(|&(i, w)| w * row[i]).sum();
        }
    }

    let mut out = vec![0.0; out_w * out_h];
    for (oy, weights) in wy.iter().enumerate() {
        for ox in 0..out_w {
            let v: f64 = weights
                .iter()
                .map(|&(i, w)| w * horiz[i * out_w + ox])
                .sum();
            out[oy * out_w + ox] = v.clamp(0.0, 255.0);
        }
    }
    LumaPlane {
        width: out_w,
        height: out_h,
        data: out,
    }
}

/// `basis[u][x] = α(u) cos((2x + 1) u π / 64)`.
fn dct_basis() -> &'static [[f64; DCT_SIZE]; DCT_SIZE] {
    static BASIS: OnceLock<[[f64; DCT_SIZE]; DCT_SIZE]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let n = DCT_SIZE as f64;
        let mut b = [[0.0; DCT_SIZE]; DCT_SIZE];
        for (u, row) in b.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2.0 * n)).cos();
            }
        }
        b
    })
}

/// Orthonormal 2D DCT-II of a 32×32 plane, evaluated as two separable passes.
pub fn dct2_32(p: &LumaPlane) -> Result<DctGrid, ImageError> {
    if p.width != DCT_SIZE || p.height != DCT_SIZE {
        return Err(ImageError::DctShape {
            width: p.width,
            height: p.height,
        });
    }
    let basis = dct_basis();

    // rows[y][u] = Σx basis[u][x] f(x, y)
    let mut rows = [[0.0; DCT_SIZE]; DCT_SIZE];
    for (y, out_row) in rows.iter_mut().enumerate() {
        let src = &p.data[y * DCT_SIZE..(y + 1) * DCT_SIZE];
        for (u, out) in out_row.iter_mut().enumerate() {
            *out = basis[u].iter().zip(src).map(|(b, f)| b * f).sum();
        }
    }

    let mut data = Box::new([0.0; DCT_SIZE * DCT_SIZE]);
    for u in 0..DCT_SIZE {
        for v in 0..DCT_SIZE {
            data[u * DCT_SIZE + v] = (0..DCT_SIZE).map(|y| basis[v][y] * rows[y][u]).sum();
        }
    }
    Ok(DctGrid { data })
}

/// The canonical hashing chain: luma, blur, 32×32 area resize, DCT.
pub fn canonical_dct(img: &Raster) -> DctGrid {
    let plane = resize_area(&box_blur7(&to_luma(img)), DCT_SIZE, DCT_SIZE);
    dct2_32(&plane).expect("resize_area produced a 32x32 plane")
}

/// Decodes netpbm (and, with the `codecs` feature, PNG/JPEG) bytes.
pub fn decode(bytes: &[u8]) -> Result<Raster, ImageError> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return netpbm::decode(bytes);
    }
    #[cfg(feature = "codecs")]
    {
        let img = image::load_from_memory(bytes).map_err(|e| ImageError::Codec(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        return Raster::new(w, h, Channels::Rgb, rgb.into_raw());
    }
    #[allow(unreachable_code)]
    Err(ImageError::UnknownFormat)
}
