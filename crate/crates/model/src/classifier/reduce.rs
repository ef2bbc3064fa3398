//! Feature fusion and PCA reduction to a real per-pixel grid.

use kcdm_core::numerics::{pca_fit, pca_transform, PcaModel, Real};
use kcdm_core::{Error, Result};
use kcdm_nn::Tensor;

use crate::classifier::head::RealGrid;
use crate::features::concat_channels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Concat,
    Add,
}

/// Combines low- and high-frequency features channelwise.
pub fn fuse_features<F: Real>(f1: Option<&Tensor<F>>, f2: Option<&Tensor<F>>, mode: Fusion) -> Result<Tensor<F>> {
    match (f1, f2) {
        (Some(a), Some(b)) => {
            if (a.chw().1, a.chw().2) != (b.chw().1, b.chw().2) {
                return Err(Error::shape(a.dims(), b.dims()));
            }
            match mode {
                Fusion::Concat => concat_channels(&[a, b]),
                Fusion::Add => {
                    if a.dims() != b.dims() {
                        return Err(Error::shape(a.dims(), b.dims()));
                    }
                    let mut s = a.clone();
                    s.add_assign(b);
                    Ok(s)
                }
            }
        }
        (Some(a), None) | (None, Some(a)) => Ok(a.clone()),
        (None, None) => Err(Error::InvalidArgument("no features to fuse".into())),
    }
}

/// Per-pixel real rows `[Re c0, Im c0, Re c1, Im c1, ...]`, row-major over
/// pixels; returns the rows and their dimension.
pub fn pixel_rows<F: Real>(t: &Tensor<F>) -> (Vec<f64>, usize) {
    let (c, h, w) = t.chw();
    let n = h * w;
    let dim = 2 * c;
    let mut rows = vec![0.0; n * dim];
    for ch in 0..c {
        for p in 0..n {
            rows[p * dim + 2 * ch] = t.re[ch * n + p].as_f64();
            rows[p * dim + 2 * ch + 1] = t.im[ch * n + p].as_f64();
        }
    }
    (rows, dim)
}

/// PCA fitted on training pixels, with each kept component scaled to unit
/// training variance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureReducer {
    pub pca: PcaModel,
    pub scale: Vec<f64>,
}

impl FeatureReducer {
    /// Fits on `train_rows` only (`n × dim`).
    pub fn fit(train_rows: &[f64], dim: usize, kept_dims: usize) -> Result<Self> {
        let pca = pca_fit(train_rows, dim, kept_dims.min(dim))?;
        let scale = pca.variances[..pca.kept_dims]
            .iter()
            .map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Ok(FeatureReducer { pca, scale })
    }

    pub fn kept_dims(&self) -> usize {
        self.pca.kept_dims
    }

    /// Projects rows onto a `[kept, H, W]` real grid.
    pub fn transform(&self, rows: &[f64], height: usize, width: usize) -> Result<RealGrid<f32>> {
        let k = self.kept_dims();
        if rows.len() != height * width * self.pca.dim {
            return Err(Error::shape(height * width * self.pca.dim, rows.len()));
        }
        let z = pca_transform(&self.pca, rows)?;
        let n = height * width;
        let mut grid = vec![0f32; k * n];
        for p in 0..n {
            for j in 0..k {
                grid[j * n + p] = (z[p * k + j] * self.scale[j]) as f32;
            }
        }
        RealGrid::new(k, height, width, grid)
    }

    /// Fraction of the training variance kept.
    pub fn explained_variance_ratio(&self) -> f64 {
        let total = self.pca.total_variance();
        if total > 0.0 {
            self.pca.variances[..self.kept_dims()].iter().sum::<f64>() / total
        } else {
            1.0
        }
    }
}

/// Rows of the listed pixels.
pub fn select_rows(rows: &[f64], dim: usize, pixels: &[usize]) -> Vec<f64> {
    pixels.iter().flat_map(|&p| rows[p * dim..(p + 1) * dim].iter().copied()).collect()
}
