//! Binary PGM (P5) and PPM (P6) codec. Only `maxval = 255` is accepted so
//! decoded samples map one-to-one onto the 8-bit raster.

use super::{Channels, ImageError, Raster};

fn err(offset: usize, reason: impl Into<String>) -> ImageError {
    ImageError::Netpbm {
        offset,
        reason: reason.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    /// Skips whitespace and `#` comments that run to end of line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, format!("{what} out of range")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Raster, ImageError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => Channels::Luma,
        Some(b"P6") => Channels::Rgb,
        _ => return Err(err(0, "missing P5/P6 magic")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(err(maxval_at, format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(err(maxval_at, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(err(h.pos, "expected single whitespace after header")),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels.count()))
        .ok_or_else(|| err(0, "dimensions overflow"))?;
    let body = &bytes[h.pos..];
    if body.len() < len {
        return Err(err(
            bytes.len(),
            format!("truncated pixel data: {} of {len} bytes", body.len()),
        ));
    }
    Raster::new(width, height, channels, body[..len].to_vec())
}

/// Encodes as P5 for luma rasters and P6 for RGB.
pub fn encode(img: &Raster) -> Vec<u8> {
    let magic = match img.channels() {
        Channels::Luma => "P5",
        Channels::Rgb => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_pgm_with_comments() {
        let mut bytes = b"P5\n# made by hand\n3 # width\n2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 2, Channels::Luma));
        assert_eq!(img.data(), &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn decodes_ppm() {
        let mut bytes = b"P6 1 1 255 ".to_vec();
        bytes.extend_from_slice(&[10, 20, 30]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.rgb(0, 0), [10, 20, 30]);
    }

    #[test]
    fn rejects_other_maxvals() {
        let bytes = b"P5 1 1 65535\n\0\0".to_vec();
        assert!(matches!(decode(&bytes), Err(ImageError::Netpbm { offset: 6, .. })));
        let bytes = b"P5 1 1 15\n\0".to_vec();
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn rejects_truncated_body() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0; 11]);
        let e = decode(&bytes).unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
    }

    #[test]
    fn rejects_ascii_variants_and_garbage() {
        assert!(decode(b"P2 1 1 255 0").is_err());
        assert!(decode(b"P5 x 1 255 0").is_err());
        assert!(decode(b"").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            w in 1usize..12, h in 1usize..12, rgb in any::<bool>(), seed in any::<u64>()
        ) {
            let ch = if rgb { Channels::Rgb } else { Channels::Luma };
            let n = w * h * ch.count();
            let data: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = Raster::new(w, h, ch, data).unwrap();
            prop_assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }
}
