//! 112-dimensional image features: the 64 low-frequency DCT coefficients of
//! the hashing chain followed by a 48-bin RGB histogram.

use serde::{Deserialize, Serialize};

use crate::imagecore::{canonical_dct, Raster};
use crate::phash::{hash_from_dct, PerceptualHash};

pub const FEATURE_DIM: usize = 112;
pub const FEATURE_SPEC_ID: &str = "dct64+rgbhist48";

const BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

fn rgb_histogram(img: &Raster) -> [f64; 3 * BINS] {
    let mut counts = [0u64; 3 * BINS];
    for y in 0..img.height() {
        for x in 0..img.width() {
            for (ch, v) in img.rgb(x, y).into_iter().enumerate() {
                counts[ch * BINS + usize::from(v >> 4)] += 1;
            }
        }
    }
    let pixels = (img.width() * img.height()) as f64;
    counts.map(|c| c as f64 / pixels)
}

/// Features plus the perceptual hash, sharing one DCT computation.
pub fn extract_with_hash(img: &Raster) -> (FeatureVector, PerceptualHash) {
    let grid = canonical_dct(img);
    let mut values = Vec::with_capacity(FEATURE_DIM);
    values.extend_from_slice(&grid.low_frequency_block());
    values.extend_from_slice(&rgb_histogram(img));
    (FeatureVector(values), hash_from_dct(&grid))
}

pub fn extract_features(img: &Raster) -> FeatureVector {
    extract_with_hash(img).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{box_blur7, resize_area, to_luma, Channels};
    use crate::phash::phash;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn seeded_image(seed: u64, w: usize, h: usize) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.gen()).collect();
        Raster::new(w, h, Channels::Rgb, data).unwrap()
    }

    /// Direct evaluation of the DCT-II sum for one coefficient.
    fn naive_coeff(plane: &[f64], u: usize, v: usize) -> f64 {
        let n: f64 = 32.0;
        let a = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut s = 0.0;
        for y in 0..32 {
            for x in 0..32 {
                s += plane[y * 32 + x]
                    * ((2 * x + 1) as f64 * u as f64 * PI / 64.0).cos()
                    * ((2 * y + 1) as f64 * v as f64 * PI / 64.0).cos();
            }
        }
        a(u) * a(v) * s
    }

    #[test]
    fn constant_image_layout() {
        let img = Raster::new(6, 4, Channels::Rgb, [200, 17, 255].repeat(24)).unwrap();
        let f = extract_features(&img);
        assert_eq!(f.dim(), FEATURE_DIM);
        assert!(f.values()[..64].iter().all(|&v| v.abs() < 1e-9));
        let hist = &f.values()[64..];
        for (ch, v) in [200u8, 17, 255].into_iter().enumerate() {
            for b in 0..16 {
                let expected = if b == usize::from(v >> 4) { 1.0 } else { 0.0 };
                assert_eq!(hist[ch * 16 + b], expected);
            }
        }
    }

    #[test]
    fn luma_histogram_is_replicated() {
        let img = Raster::new(2, 1, Channels::Luma, vec![0, 255]).unwrap();
        let f = extract_features(&img);
        let hist = &f.values()[64..];
        for ch in 0..3 {
            assert_eq!(hist[ch * 16], 0.5);
            assert_eq!(hist[ch * 16 + 15], 0.5);
        }
    }

    #[test]
    fn matches_independent_computation() {
        let img = seeded_image(99, 41, 29);
        let f = extract_features(&img);
        let plane = resize_area(&box_blur7(&to_luma(&img)), 32, 32);
        for r in 0..8 {
            for c in 0..8 {
                let want = naive_coeff(plane.data(), r + 1, c + 1);
                assert!((f.values()[8 * r + c] - want).abs() < 1e-9);
            }
        }
        let mut hist = vec![0.0; 48];
        for px in img.data().chunks(3) {
            for ch in 0..3 {
                hist[ch * 16 + (px[ch] / 16) as usize] += 1.0 / (41.0 * 29.0);
            }
        }
        for (a, b) in f.values()[64..].iter().zip(&hist) {
            assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = f.values()[64..].iter().sum();
        assert!((total - 3.0).abs() < 1e-9);
    }

    #[test]
    fn hash_agrees_with_phash() {
        for seed in 0..5 {
            let img = seeded_image(seed, 50, 37);
            let (f, h) = extract_with_hash(&img);
            assert_eq!(h, phash(&img));
            assert_eq!(f, extract_features(&img));
            assert!(f.values().iter().all(|v| v.is_finite()));
        }
    }
}
