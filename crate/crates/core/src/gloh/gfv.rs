//! `GFV1` feature files.
//!
//! Layout: ASCII `GFV1`, then `u32` LE row count N, `u32` LE dimension K, then
//! N*K `f32` LE values, row-major.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"GFV1";

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("not a GFV1 file")]
    BadMagic,
    #[error("feature file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("matrix of {rows}x{cols} does not fit the GFV1 header")]
    TooLarge { rows: usize, cols: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub fn encode<T: Real>(features: ArrayView2<'_, T>) -> Result<Vec<u8>, FeatureFileError> {
    let mut out = Vec::with_capacity(12 + features.len() * 4);
    write_to(&mut out, features)?;
    Ok(out)
}

pub fn write_to<T: Real, W: Write>(
    mut w: W,
    features: ArrayView2<'_, T>,
) -> Result<(), FeatureFileError> {
    let (rows, cols) = features.dim();
    let too_large = || FeatureFileError::TooLarge { rows, cols };
    let n = u32::try_from(rows).map_err(|_| too_large())?;
    let k = u32::try_from(cols).map_err(|_| too_large())?;
    w.write_all(MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&k.to_le_bytes())?;
    for row in features.rows() {
        for &v in row {
            let v = v.to_f32().unwrap_or(f32::NAN);
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write<T: Real>(
    path: impl AsRef<Path>,
    features: ArrayView2<'_, T>,
) -> Result<(), FeatureFileError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_to(&mut w, features)?;
    w.flush()?;
    Ok(())
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Array2<T>, FeatureFileError> {
    if bytes.len() < 12 {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            FeatureFileError::BadMagic
        } else {
            FeatureFileError::Truncated {
                expected: 12,
                found: bytes.len(),
            }
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(FeatureFileError::BadMagic);
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + n * k * 4;
    if bytes.len() < expected {
        return Err(FeatureFileError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<T> = bytes[12..expected]
        .chunks_exact(4)
        .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().unwrap()))))
        .collect();
    Ok(Array2::from_shape_vec((n, k), values).expect("length checked above"))
}

pub fn read<T: Real>(path: impl AsRef<Path>) -> Result<Array2<T>, FeatureFileError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Array2::from_shape_vec((2, 3), vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let b = encode(m.view()).unwrap();
        assert_eq!(&b[..4], b"GFV1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(b.len(), 12 + 6 * 4);
        assert_eq!(&b[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&b[32..36], &6.5f32.to_le_bytes());
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            decode::<f64>(b"GFV2\0\0\0\0\0\0\0\0"),
            Err(FeatureFileError::BadMagic)
        ));
        let mut b = encode(Array2::<f32>::zeros((3, 3)).view()).unwrap();
        b.truncate(30);
        assert!(matches!(
            decode::<f32>(&b),
            Err(FeatureFileError::Truncated { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_f32(n in 0usize..6, k in 0usize..6, seed in any::<u32>()) {
            let m = Array2::from_shape_fn((n, k), |(i, j)| {
                (seed.wrapping_mul(2654435761).wrapping_add((i * 31 + j) as u32) % 10_000) as f32 / 77.0
            });
            let back: Array2<f32> = decode(&encode(m.view()).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
