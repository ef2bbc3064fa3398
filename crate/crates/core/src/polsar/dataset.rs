//! `PSAR1` dataset container.
//!
//! Layout (little-endian): magic `"PSAR1\0"`, `u32` height, `u32` width,
//! `u8` looks, three reserved zero bytes, then `H·W·6` complex values as
//! `(f32 re, f32 im)` in row-major channel-interleaved order, then `H·W`
//! label bytes (255 = unlabeled).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{from_channels, to_channels, CoherencyField, LabelMap, COHERENCY_CHANNELS, UNLABELED};
use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

pub const DATASET_MAGIC: &[u8; 6] = b"PSAR1\0";
const HEADER_LEN: usize = 6 + 4 + 4 + 1 + 3;

pub fn write_dataset(field: &CoherencyField, labels: &LabelMap, out: &mut impl Write) -> Result<()> {
    if (field.height, field.width) != (labels.height, labels.width) {
        return Err(Error::Dimension(format!(
            "field is {}x{} but labels are {}x{}",
            field.height, field.width, labels.height, labels.width
        )));
    }
    let channels = to_channels(field);
    let mut buf = Vec::with_capacity(HEADER_LEN + channels.data().len() * 8 + labels.labels.len());
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&(field.height as u32).to_le_bytes());
    buf.extend_from_slice(&(field.width as u32).to_le_bytes());
    buf.push(field.looks);
    buf.extend_from_slice(&[0u8; 3]);
    for z in channels.data() {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    buf.extend_from_slice(&labels.labels);
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_dataset(field: &CoherencyField, labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(field, labels, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parses a dataset from bytes. The class count is inferred as the largest
/// label plus one (at least two).
pub fn read_dataset(bytes: &[u8]) -> Result<(CoherencyField, LabelMap)> {
    if bytes.len() < DATASET_MAGIC.len() || &bytes[..6] != DATASET_MAGIC {
        return Err(Error::BadMagic { expected: "PSAR1\\0" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let height = u32_at(6);
    let width = u32_at(10);
    let looks = bytes[14];
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("header declares empty {height}x{width} scene")));
    }
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::Dimension("scene size overflows".into()))?;
    let payload = n * COHERENCY_CHANNELS * 8;
    let expected = HEADER_LEN + payload + n;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Dimension(format!(
            "{} trailing bytes after a {height}x{width} payload",
            bytes.len() - expected
        )));
    }
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as f64;
    let data = (0..n * COHERENCY_CHANNELS)
        .map(|i| {
            let o = HEADER_LEN + i * 8;
            num_complex::Complex::new(f32_at(o), f32_at(o + 4))
        })
        .collect();
    let image = ComplexImage::from_vec(height, width, COHERENCY_CHANNELS, data)?;
    let field = from_channels(&image, looks)?;
    let label_bytes = bytes[HEADER_LEN + payload..].to_vec();
    let classes = label_bytes
        .iter()
        .filter(|&&l| l != UNLABELED)
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(2)
        .max(2);
    let labels = LabelMap::new(height, width, classes, label_bytes)?;
    Ok((field, labels))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(CoherencyField, LabelMap)> {
    read_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::polsar::{builtin_sigmas, default_layout, synth_scene};

    fn sample() -> (CoherencyField, LabelMap) {
        let layout = default_layout(16, 20, 3).unwrap();
        let field = synth_scene(&layout, &builtin_sigmas(), 4, &RngStream::new(2)).unwrap();
        (field, layout)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (field, labels) = sample();
        let mut bytes = Vec::new();
        write_dataset(&field, &labels, &mut bytes).unwrap();
        let (f2, l2) = read_dataset(&bytes).unwrap();
        assert_eq!(f2, field.quantized());
        assert_eq!(l2, labels);
        let mut again = Vec::new();
        write_dataset(&f2, &l2, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn file_round_trip() {
        let (field, labels) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.psar");
        save_dataset(&field, &labels, &path).unwrap();
        let (f2, l2) = load_dataset(&path).unwrap();
        assert_eq!(f2, field.quantized());
        assert_eq!(l2, labels);
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let (field, labels) = sample();
        let mut bytes = Vec::new();
        write_dataset(&field, &labels, &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_dataset(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(DATASET_MAGIC);
        bytes.extend_from_slice(&64u32.to_le_bytes());
        bytes.extend_from_slice(&64u32.to_le_bytes());
        bytes.extend_from_slice(&[4, 0, 0, 0]);
        bytes.extend_from_slice(&[0u8; 100]);
        assert!(matches!(read_dataset(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn mismatched_label_dims_are_rejected() {
        let (field, _) = sample();
        let other = LabelMap::vertical_split(8, 8);
        assert!(matches!(
            write_dataset(&field, &other, &mut Vec::new()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn error_codes_are_distinct() {
        let codes = [
            Error::BadMagic { expected: "" }.code(),
            Error::Truncated { expected: 0, found: 0 }.code(),
            Error::Dimension(String::new()).code(),
        ];
        assert_ne!(codes[0], codes[1]);
        assert_ne!(codes[1], codes[2]);
        assert_ne!(codes[0], codes[2]);
    }
}
