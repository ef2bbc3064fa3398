//! `CPYR1` pyramid container.
//!
//! Layout (little-endian): magic `"CPYR1\0"`, `u32` height, width, channels,
//! levels, direction exponent, then every subband in storage order
//! (lowpass first, then level-major, direction-minor) as `(f32 re, f32 im)`
//! pairs in row-major channel-interleaved order.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex;

use super::ContourletPyramid;
use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Real};

pub const PYRAMID_MAGIC: &[u8; 6] = b"CPYR1\0";
const HEADER_LEN: usize = 6 + 5 * 4;

pub fn write_pyramid<T: Real>(pyramid: &ContourletPyramid<T>, out: &mut impl Write) -> Result<()> {
    let (h, w, c) = pyramid.shape();
    let dirs = pyramid.directions();
    if !dirs.is_power_of_two() || pyramid.high.iter().any(|l| l.len() != dirs) {
        return Err(Error::InvalidArgument(format!("{dirs} directions per level is not a power of two")));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + pyramid.subbands().count() * h * w * c * 8);
    buf.extend_from_slice(PYRAMID_MAGIC);
    for v in [h, w, c, pyramid.levels(), dirs.trailing_zeros() as usize] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for band in pyramid.subbands() {
        if band.shape() != (h, w, c) {
            return Err(Error::shape(format!("{h}x{w}x{c}"), format!("{:?}", band.shape())));
        }
        for z in band.data() {
            buf.extend_from_slice(&(z.re.as_f64() as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_pyramid<T: Real>(pyramid: &ContourletPyramid<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_pyramid(pyramid, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_pyramid(bytes: &[u8]) -> Result<ContourletPyramid<f32>> {
    if bytes.len() < PYRAMID_MAGIC.len() || &bytes[..6] != PYRAMID_MAGIC {
        return Err(Error::BadMagic { expected: "CPYR1\\0" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c, levels, j) = (u32_at(6), u32_at(10), u32_at(14), u32_at(18), u32_at(22));
    if h == 0 || w == 0 || c == 0 || levels == 0 || j > 16 {
        return Err(Error::Dimension(format!("invalid header {h}x{w}x{c}, L={levels}, j={j}")));
    }
    let dirs = 1usize << j;
    let per_band = h * w * c;
    let expected = HEADER_LEN + (1 + levels * dirs) * per_band * 8;
    if bytes.len() != expected {
        return Err(if bytes.len() < expected {
            Error::Truncated {
                expected,
                found: bytes.len(),
            }
        } else {
            Error::Dimension(format!("{} trailing bytes", bytes.len() - expected))
        });
    }
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let band = |k: usize| {
        let base = HEADER_LEN + k * per_band * 8;
        let data = (0..per_band)
            .map(|i| Complex::new(f32_at(base + i * 8), f32_at(base + i * 8 + 4)))
            .collect();
        ComplexImage::from_vec(h, w, c, data)
    };
    let low = band(0)?;
    let mut high = Vec::with_capacity(levels);
    for i in 0..levels {
        high.push((0..dirs).map(|d| band(1 + i * dirs + d)).collect::<Result<Vec<_>>>()?);
    }
    Ok(ContourletPyramid { low, high })
}

pub fn load_pyramid(path: impl AsRef<Path>) -> Result<ContourletPyramid<f32>> {
    read_pyramid(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contourlet::{build_filter_bank, decompose};
    use crate::numerics::{sample_complex_gaussian, RngStream};

    fn pyramid() -> ContourletPyramid<f32> {
        let x = sample_complex_gaussian::<f32>((16, 16, 2), &mut RngStream::new(1)).unwrap();
        decompose(&x, &build_filter_bank(2, 2, 16, 16).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = pyramid();
        let mut bytes = Vec::new();
        write_pyramid(&p, &mut bytes).unwrap();
        assert_eq!(read_pyramid(&bytes).unwrap(), p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.cpyr");
        save_pyramid(&p, &path).unwrap();
        assert_eq!(load_pyramid(&path).unwrap(), p);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let mut bytes = Vec::new();
        write_pyramid(&pyramid(), &mut bytes).unwrap();
        assert!(matches!(read_pyramid(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[1] = b'Q';
        assert!(matches!(read_pyramid(&bad), Err(Error::BadMagic { .. })));
        bytes.push(0);
        assert!(matches!(read_pyramid(&bytes), Err(Error::Dimension(_))));
    }
}
