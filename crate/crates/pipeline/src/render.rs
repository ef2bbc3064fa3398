//! Colour-mapped PNG rendering of label maps with a JSON legend.

use std::io::Write;

use anyhow::Result;
use serde_json::{json, Value};

use kcdm_core::polsar::{LabelMap, UNLABELED};

/// Colour of unlabelled pixels.
pub const UNLABELED_COLOR: [u8; 3] = [0, 0, 0];

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Fixed colour per class index; indices past the palette get a derived,
/// still deterministic colour.
pub fn class_color(class: u8) -> [u8; 3] {
    if class == UNLABELED {
        return UNLABELED_COLOR;
    }
    match PALETTE.get(class as usize) {
        Some(c) => *c,
        None => {
            let h = (class as u32).wrapping_mul(2654435761);
            [(h >> 24) as u8 | 0x20, (h >> 16) as u8 | 0x20, (h >> 8) as u8 | 0x20]
        }
    }
}

pub fn rgb(map: &LabelMap) -> Vec<u8> {
    map.labels.iter().flat_map(|&l| class_color(l)).collect()
}

pub fn write_png(map: &LabelMap, out: impl Write) -> Result<()> {
    let mut enc = png::Encoder::new(out, map.width as u32, map.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    w.write_image_data(&rgb(map))?;
    w.finish()?;
    Ok(())
}

pub fn png_bytes(map: &LabelMap) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_png(map, &mut buf)?;
    Ok(buf)
}

pub fn legend(classes: usize) -> Value {
    let entries: Vec<Value> = (0..classes).map(|c| json!({ "class": c, "rgb": class_color(c as u8) })).collect();
    json!({ "classes": entries, "unlabeled": UNLABELED_COLOR })
}
