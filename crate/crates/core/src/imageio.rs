//! Loading of aligned grayscale face images.
//!
//! Only the Netpbm grayscale formats are accepted: ASCII `P2` and binary `P5`
//! with `maxval <= 255`. Header comments (`#` to end of line) are skipped.
//! Pixel values are kept as stored; no rescaling to the 0..=255 range is done
//! for smaller maxvals.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("unsupported maxval {0} (must be <= 255)")]
    UnsupportedMaxval(u32),
    #[error("invalid pixel value {value} at sample {index} (maxval {maxval})")]
    InvalidPixel {
        index: usize,
        value: u32,
        maxval: u32,
    },
    #[error("image is {actual_h}x{actual_w}, expected {expected_h}x{expected_w}")]
    DimensionMismatch {
        actual_h: usize,
        actual_w: usize,
        expected_h: usize,
        expected_w: usize,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// 8-bit grayscale image, row-major with top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::InvalidImage(format!(
                "zero dimension {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(ImageError::InvalidImage(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Reads a PGM file from disk.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ImageError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    parse_pgm(&bytes)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        let tok = self
            .token()
            .ok_or_else(|| ImageError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                ImageError::MalformedHeader(format!(
                    "non-numeric {what}: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Parses an in-memory P2 or P5 byte stream.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let binary = match rd.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        Some(other) => {
            return Err(ImageError::MalformedHeader(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
        None => return Err(ImageError::MalformedHeader("empty file".into())),
    };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(ImageError::MalformedHeader("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;

    let pixels = if binary {
        // exactly one whitespace byte separates maxval from the raster
        if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
            return Err(ImageError::TruncatedPixelData { expected, found: 0 });
        }
        let data = &bytes[rd.pos + 1..];
        if data.len() < expected {
            return Err(ImageError::TruncatedPixelData {
                expected,
                found: data.len(),
            });
        }
        let data = &data[..expected];
        if let Some(i) = data.iter().position(|&v| u32::from(v) > maxval) {
            return Err(ImageError::InvalidPixel {
                index: i,
                value: u32::from(data[i]),
                maxval,
            });
        }
        data.to_vec()
    } else {
        let mut px = Vec::with_capacity(expected);
        for i in 0..expected {
            let Some(tok) = rd.token() else {
                return Err(ImageError::TruncatedPixelData { expected, found: i });
            };
            let value = std::str::from_utf8(tok)
                .ok()
                .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| {
                    ImageError::MalformedHeader(format!(
                        "non-numeric sample {i}: {:?}",
                        String::from_utf8_lossy(tok)
                    ))
                })?;
            if value > maxval {
                return Err(ImageError::InvalidPixel {
                    index: i,
                    value,
                    maxval,
                });
            }
            px.push(value as u8);
        }
        px
    };
    GrayImage::new(height, width, pixels)
}

/// Serializes an image as binary P5 with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}

/// Enforces the expected (height, width) of the pipeline's input images.
pub fn check_dims(
    img: GrayImage,
    expected_h: usize,
    expected_w: usize,
) -> Result<GrayImage, ImageError> {
    if img.height != expected_h || img.width != expected_w {
        return Err(ImageError::DimensionMismatch {
            actual_h: img.height,
            actual_w: img.width,
            expected_h,
            expected_w,
        });
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p5(h: usize, w: usize, data_len: usize) -> Vec<u8> {
        let mut b = format!("P5\n{w} {h}\n255\n").into_bytes();
        b.extend((0..data_len).map(|i| (i % 251) as u8));
        b
    }

    #[test]
    fn p5_header_dims() {
        let img = parse_pgm(&p5(68, 62, 4216)).unwrap();
        assert_eq!((img.height(), img.width()), (68, 62));
        assert_eq!(img.get(0, 1), 1);
    }

    #[test]
    fn p2_direct_parse() {
        let img = parse_pgm(b"P2 2 2 255 0 64 128 255").unwrap();
        assert_eq!(img.pixels(), &[0, 64, 128, 255]);
    }

    #[test]
    fn p5_truncated() {
        match parse_pgm(&p5(68, 62, 4000)) {
            Err(ImageError::TruncatedPixelData { expected, found }) => {
                assert_eq!((expected, found), (4216, 4000))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_pgm(b"P6 2 2 255 abcd"),
            Err(ImageError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pgm(b"P2 x 2 255 0 0 0 0"),
            Err(ImageError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pgm(b"P2 2 2 65535 0 0 0 0"),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            parse_pgm(b"P2 2 2 255 0 0 0"),
            Err(ImageError::TruncatedPixelData { .. })
        ));
        assert!(matches!(
            parse_pgm(b"P2 1 1 15 16"),
            Err(ImageError::InvalidPixel { .. })
        ));
    }

    #[test]
    fn comments_skipped() {
        let img = parse_pgm(b"P2\n# made by hand\n2 1 # dims\n255\n7 9\n").unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_pgm("/nonexistent/face.pgm"),
            Err(ImageError::MissingFile(_))
        ));
    }

    #[test]
    fn check_dims_contract() {
        let img = GrayImage::from_fn(68, 62, |r, c| (r + c) as u8);
        let same = check_dims(img.clone(), 68, 62).unwrap();
        assert_eq!(same, img);
        assert_eq!(check_dims(same, 68, 62).unwrap(), img);
        let small = GrayImage::from_fn(64, 64, |_, _| 0);
        assert!(matches!(
            check_dims(small, 68, 62),
            Err(ImageError::DimensionMismatch {
                actual_h: 64,
                actual_w: 64,
                ..
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::from_fn(5, 7, |r, c| (r * 31 + c * 7) as u8);
        write_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn p5_round_trip(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
            let img = GrayImage::from_fn(h, w, |r, c| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add((r * w + c) as u64) >> 13) as u8
            });
            prop_assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
        }

        #[test]
        fn parsing_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(img) = parse_pgm(&bytes) {
                prop_assert_eq!(img.pixels().len(), img.height() * img.width());
            }
        }

        #[test]
        fn parsing_is_total_with_valid_prefix(tail in proptest::collection::vec(any::<u8>(), 0..40)) {
            let mut bytes = b"P5 4 3 255\n".to_vec();
            bytes.extend(tail);
            match parse_pgm(&bytes) {
                Ok(img) => prop_assert_eq!(img.pixels().len(), 12),
                Err(ImageError::TruncatedPixelData { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
