//! Scene-level inference by overlapping windows, and the two feature maps
//! fed to the classifier.
//!
//! Networks are trained on fixed-size patches and their attention is global
//! within the input, so full scenes are processed as `window × window` tiles
//! at stride `window / 2`, keeping each tile's central `stride × stride`
//! block. The scene is reflect-padded so that every output pixel is a tile
//! centre.

use rayon::prelude::*;

use kcdm_core::numerics::{reflect_index, Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::{Graph, ParamStore, Tensor, Var};

use crate::cafe::Cafe;
use crate::diffusion::{complex_noise, q_sample_with_noise, NoiseSchedule};
use crate::kcdm::Kcdm;

/// Reflect-pads the spatial axes of `[C, H, W]`.
pub fn reflect_pad<F: Real>(t: &Tensor<F>, top: usize, left: usize, bottom: usize, right: usize) -> Result<Tensor<F>> {
    let (c, h, w) = t.chw();
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("cannot pad an empty tensor".into()));
    }
    let (ph, pw) = (h + top + bottom, w + left + right);
    let mut out = Tensor::zeros(&[c, ph, pw]);
    for ch in 0..c {
        for y in 0..ph {
            let sy = reflect_index(y as isize - top as isize, h as isize);
            for x in 0..pw {
                let sx = reflect_index(x as isize - left as isize, w as isize);
                let (d, s) = ((ch * ph + y) * pw + x, (ch * h + sy) * w + sx);
                out.re[d] = t.re[s];
                out.im[d] = t.im[s];
            }
        }
    }
    Ok(out)
}

/// Overlapping tiling of an `H × W` scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGrid {
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl WindowGrid {
    pub fn new(height: usize, width: usize, window: usize) -> Result<Self> {
        if window < 2 || window % 2 != 0 {
            return Err(Error::InvalidArgument(format!("window must be even and at least 2, got {window}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("empty scene".into()));
        }
        let stride = window / 2;
        Ok(WindowGrid {
            height,
            width,
            window,
            stride,
            rows: height.div_ceil(stride),
            cols: width.div_ceil(stride),
        })
    }

    /// Padding above and left of the scene; tile `(i, j)` keeps scene pixels
    /// `[i·stride, (i+1)·stride) × [j·stride, (j+1)·stride)`.
    pub fn margin(&self) -> usize {
        self.stride / 2
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.rows * self.stride + self.stride, self.cols * self.stride + self.stride)
    }

    pub fn pad<F: Real>(&self, t: &Tensor<F>) -> Result<Tensor<F>> {
        let (_, h, w) = t.chw();
        if (h, w) != (self.height, self.width) {
            return Err(Error::shape((self.height, self.width), (h, w)));
        }
        let m = self.margin();
        let (ph, pw) = self.padded_shape();
        reflect_pad(t, m, m, ph - h - m, pw - w - m)
    }

    pub fn origins(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i * self.stride, j * self.stride)))
            .collect()
    }

    /// Applies `f` to the co-located windows of each padded input and
    /// stitches the tile centres into a `[C, H, W]` map.
    pub fn map<F, G>(&self, padded: &[&Tensor<F>], f: G) -> Result<Tensor<F>>
    where
        F: Real,
        G: Fn(Vec<Tensor<F>>) -> Result<Tensor<F>> + Sync,
    {
        let tiles: Vec<Tensor<F>> = self
            .origins()
            .par_iter()
            .map(|&(y0, x0)| {
                let wins = padded
                    .iter()
                    .map(|t| t.window(y0, x0, self.window, self.window))
                    .collect::<Result<Vec<_>>>()?;
                f(wins)
            })
            .collect::<Result<_>>()?;
        let c = tiles.first().map(|t| t.chw().0).unwrap_or(0);
        let (h, w, s, m) = (self.height, self.width, self.stride, self.margin());
        let mut out = Tensor::zeros(&[c, h, w]);
        for ((y0, x0), tile) in self.origins().into_iter().zip(&tiles) {
            let (tc, th, tw) = tile.chw();
            if (tc, th, tw) != (c, self.window, self.window) {
                return Err(Error::shape([c, self.window, self.window], [tc, th, tw]));
            }
            for ch in 0..c {
                for dy in 0..s {
                    let y = y0 + dy;
                    if y >= h {
                        break;
                    }
                    for dx in 0..s {
                        let x = x0 + dx;
                        if x >= w {
                            break;
                        }
                        let src = (ch * th + m + dy) * tw + m + dx;
                        out.re[(ch * h + y) * w + x] = tile.re[src];
                        out.im[(ch * h + y) * w + x] = tile.im[src];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Concatenates `[C_i, H, W]` tensors along channels.
pub fn concat_channels<F: Real>(parts: &[&Tensor<F>]) -> Result<Tensor<F>> {
    let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    let (_, h, w) = first.chw();
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut c = 0;
    for p in parts {
        let (pc, ph, pw) = p.chw();
        if (ph, pw) != (h, w) {
            return Err(Error::shape((h, w), (ph, pw)));
        }
        re.extend_from_slice(&p.re);
        im.extend_from_slice(&p.im);
        c += pc;
    }
    Tensor::from_parts(&[c, h, w], re, im)
}

/// Low-frequency features: the decoder activation at `layer` (1 = full
/// resolution) of the denoiser applied to the scene noised to `t_feat`,
/// upsampled to full resolution.
///
/// One noise field drawn from `seed` covers the padded scene, so the result
/// does not depend on tiling order.
#[allow(clippy::too_many_arguments)]
pub fn extract_features<F: Real>(
    model: &Kcdm,
    store: &ParamStore<F>,
    low: &Tensor<F>,
    high: Option<&Tensor<F>>,
    schedule: &NoiseSchedule,
    t_feat: usize,
    layer: usize,
    grid: &WindowGrid,
    seed: u64,
) -> Result<Tensor<F>> {
    if layer == 0 || layer > model.unet.config.depth {
        return Err(Error::InvalidArgument(format!("layer {layer} outside 1..={}", model.unet.config.depth)));
    }
    if model.skem.is_some() != high.is_some() {
        return Err(Error::InvalidArgument("high-frequency input must be given exactly for guided models".into()));
    }
    let padded_low = grid.pad(low)?;
    let noise = complex_noise(padded_low.dims(), &mut RngStream::new(seed));
    let lt = q_sample_with_noise(&padded_low, t_feat, &noise, schedule)?;
    let padded_high = high.map(|h| grid.pad(h)).transpose()?;
    let mut inputs = vec![&lt];
    if let Some(h) = &padded_high {
        inputs.push(h);
    }
    grid.map(&inputs, |wins| {
        let mut g = Graph::new(store);
        let x = g.input(wins[0].clone());
        let h = wins.get(1).map(|h| g.input(h.clone()));
        let out = model.forward(&mut g, x, t_feat, h)?;
        let mut tap = out.taps[layer - 1];
        for _ in 1..layer {
            tap = g.upsample2(tap);
        }
        Ok(g.value(tap).clone())
    })
}

/// Runs the enhancement module on `high[level][direction]` windows.
pub fn cafe_window<F: Real>(cafe: &Cafe, store: &ParamStore<F>, high: &[Vec<Tensor<F>>]) -> Result<Tensor<F>> {
    let mut g = Graph::new(store);
    let vars: Vec<Vec<Var>> = high.iter().map(|l| l.iter().map(|t| g.input(t.clone())).collect()).collect();
    let y = cafe.forward(&mut g, &vars)?;
    Ok(g.value(y).clone())
}

/// High-frequency features over the whole scene.
pub fn cafe_features<F: Real>(cafe: &Cafe, store: &ParamStore<F>, high: &[Vec<Tensor<F>>], grid: &WindowGrid) -> Result<Tensor<F>> {
    let directions = high.first().map_or(0, Vec::len);
    let padded: Vec<Tensor<F>> = high.iter().flatten().map(|t| grid.pad(t)).collect::<Result<_>>()?;
    let refs: Vec<&Tensor<F>> = padded.iter().collect();
    grid.map(&refs, |wins| {
        let nested: Vec<Vec<Tensor<F>>> = wins.chunks(directions.max(1)).map(<[Tensor<F>]>::to_vec).collect();
        cafe_window(cafe, store, &nested)
    })
}
