//! Complex 2-D convolution kernels (im2col + one stacked real GEMM per group).
//!
//! For a group with `K = C_in/g · kH · kW` taps, the real and imaginary
//! columns are stacked into a `2K × N` matrix `X` and the weights into
//! `W = [[Wr, -Wi], [Wi, Wr]]`, so `[Yr; Yi] = W X` in a single product.

use kcdm_core::numerics::{gemm, Real, Trans};
use kcdm_core::{Error, Result};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `dilation · (k - 1) / 2` per side (odd kernels only).
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: Padding::Same,
        }
    }
}

impl ConvSpec {
    pub fn strided(stride: usize) -> Self {
        ConvSpec {
            stride,
            ..Default::default()
        }
    }

    pub fn dilated(dilation: usize) -> Self {
        ConvSpec {
            dilation,
            ..Default::default()
        }
    }

    pub fn grouped(groups: usize) -> Self {
        ConvSpec {
            groups,
            ..Default::default()
        }
    }

    pub fn valid() -> Self {
        ConvSpec {
            padding: Padding::Valid,
            ..Default::default()
        }
    }
}

/// Resolved geometry of one convolution call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
    pub pt: usize,
    pub pl: usize,
    pub spec: ConvSpec,
}

impl Geometry {
    pub fn new(x_dims: &[usize], w_dims: &[usize], spec: ConvSpec) -> Result<Self> {
        if x_dims.len() != 3 || w_dims.len() != 4 {
            return Err(Error::shape("[C,H,W] input and [Co,Ci/g,kH,kW] weight", (x_dims, w_dims)));
        }
        let (cin, h, w) = (x_dims[0], x_dims[1], x_dims[2]);
        let (cout, cin_g, kh, kw) = (w_dims[0], w_dims[1], w_dims[2], w_dims[3]);
        let g = spec.groups;
        if g == 0 || spec.stride == 0 || spec.dilation == 0 {
            return Err(Error::InvalidArgument("stride, dilation and groups must be positive".into()));
        }
        if cin % g != 0 || cout % g != 0 || cin / g != cin_g {
            return Err(Error::shape(
                format!("C_in={cin}, C_out={cout} divisible by {g} groups with {cin_g} inputs per group"),
                (cin, cout, cin_g),
            ));
        }
        let (pt, pl) = match spec.padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::InvalidArgument(format!("same padding needs odd kernels, got {kh}x{kw}")));
                }
                (spec.dilation * (kh - 1) / 2, spec.dilation * (kw - 1) / 2)
            }
            Padding::Valid => (0, 0),
        };
        let span_h = spec.dilation * (kh - 1) + 1;
        let span_w = spec.dilation * (kw - 1) + 1;
        if h + 2 * pt < span_h || w + 2 * pl < span_w {
            return Err(Error::shape(format!("input of at least {span_h}x{span_w}"), (h, w)));
        }
        let ho = (h + 2 * pt - span_h) / spec.stride + 1;
        let wo = (w + 2 * pl - span_w) / spec.stride + 1;
        Ok(Geometry {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            ho,
            wo,
            pt,
            pl,
            spec,
        })
    }

    fn taps(&self) -> usize {
        self.cin / self.spec.groups * self.kh * self.kw
    }

    fn n_out(&self) -> usize {
        self.ho * self.wo
    }

    /// Visits `(row, out_index, in_index)` for every in-bounds tap of group `g`,
    /// where `row` indexes the `K` column rows and `in_index` is relative to
    /// the group's first input channel.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let cin_g = self.cin / self.spec.groups;
        let (s, d) = (self.spec.stride as isize, self.spec.dilation as isize);
        for c in 0..cin_g {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.ho {
                        let iy = oy as isize * s - self.pt as isize + ky as isize * d;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = ox as isize * s - self.pl as isize + kx as isize * d;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row, oy * self.wo + ox, (c * self.h + iy as usize) * self.w + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

fn im2col<F: Real>(x: &Tensor<F>, geo: &Geometry, group: usize, cols: &mut [F]) {
    let k = geo.taps();
    let n = geo.n_out();
    let base = group * (geo.cin / geo.spec.groups) * geo.h * geo.w;
    cols.iter_mut().for_each(|v| *v = F::zero());
    geo.for_each_tap(|row, o, i| {
        cols[row * n + o] = x.re[base + i];
        cols[(k + row) * n + o] = x.im[base + i];
    });
}

fn stacked_weight<F: Real>(w: &Tensor<F>, geo: &Geometry, group: usize) -> Vec<F> {
    let k = geo.taps();
    let cog = geo.cout / geo.spec.groups;
    let mut big = vec![F::zero(); 4 * cog * k];
    for o in 0..cog {
        let src = (group * cog + o) * k;
        let (wr, wi) = (&w.re[src..src + k], &w.im[src..src + k]);
        let top = o * 2 * k;
        let bottom = (cog + o) * 2 * k;
        for t in 0..k {
            big[top + t] = wr[t];
            big[top + k + t] = -wi[t];
            big[bottom + t] = wi[t];
            big[bottom + k + t] = wr[t];
        }
    }
    big
}

pub(crate) fn conv_forward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: Option<&Tensor<F>>,
    spec: ConvSpec,
) -> Result<Tensor<F>> {
    let geo = Geometry::new(x.dims(), w.dims(), spec)?;
    if let Some(b) = b {
        if b.len() != geo.cout {
            return Err(Error::shape(geo.cout, b.len()));
        }
    }
    let (k, n) = (geo.taps(), geo.n_out());
    let cog = geo.cout / spec.groups;
    let mut out = Tensor::zeros(&[geo.cout, geo.ho, geo.wo]);
    let mut cols = vec![F::zero(); 2 * k * n];
    let mut ybig = vec![F::zero(); 2 * cog * n];
    for g in 0..spec.groups {
        im2col(x, &geo, g, &mut cols);
        let wbig = stacked_weight(w, &geo, g);
        gemm(2 * cog, 2 * k, n, F::one(), &wbig, Trans::No, &cols, Trans::No, F::zero(), &mut ybig);
        let dst = g * cog * n;
        out.re[dst..dst + cog * n].copy_from_slice(&ybig[..cog * n]);
        out.im[dst..dst + cog * n].copy_from_slice(&ybig[cog * n..]);
    }
    if let Some(b) = b {
        for o in 0..geo.cout {
            let (br, bi) = (b.re[o], b.im[o]);
            out.re[o * n..(o + 1) * n].iter_mut().for_each(|v| *v += br);
            out.im[o * n..(o + 1) * n].iter_mut().for_each(|v| *v += bi);
        }
    }
    Ok(out)
}

pub(crate) struct ConvGrads<F> {
    pub dx: Tensor<F>,
    pub dw: Tensor<F>,
    pub db: Tensor<F>,
}

pub(crate) fn conv_backward<F: Real>(x: &Tensor<F>, w: &Tensor<F>, dy: &Tensor<F>, spec: ConvSpec) -> Result<ConvGrads<F>> {
    let geo = Geometry::new(x.dims(), w.dims(), spec)?;
    let (k, n) = (geo.taps(), geo.n_out());
    let cog = geo.cout / spec.groups;
    let cin_g = geo.cin / spec.groups;
    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(w.dims());
    let mut db = Tensor::zeros(&[geo.cout, 1, 1]);
    for o in 0..geo.cout {
        db.re[o] = dy.re[o * n..(o + 1) * n].iter().copied().sum();
        db.im[o] = dy.im[o * n..(o + 1) * n].iter().copied().sum();
    }
    let mut cols = vec![F::zero(); 2 * k * n];
    let mut dybig = vec![F::zero(); 2 * cog * n];
    let mut dwbig = vec![F::zero(); 4 * cog * k];
    let mut dcols = vec![F::zero(); 2 * k * n];
    for g in 0..spec.groups {
        let src = g * cog * n;
        dybig[..cog * n].copy_from_slice(&dy.re[src..src + cog * n]);
        dybig[cog * n..].copy_from_slice(&dy.im[src..src + cog * n]);

        im2col(x, &geo, g, &mut cols);
        gemm(2 * cog, n, 2 * k, F::one(), &dybig, Trans::No, &cols, Trans::Yes, F::zero(), &mut dwbig);
        for o in 0..cog {
            let dst = (g * cog + o) * k;
            let top = o * 2 * k;
            let bottom = (cog + o) * 2 * k;
            for t in 0..k {
                dw.re[dst + t] = dwbig[top + t] + dwbig[bottom + k + t];
                dw.im[dst + t] = dwbig[bottom + t] - dwbig[top + k + t];
            }
        }

        let wbig = stacked_weight(w, &geo, g);
        gemm(2 * k, 2 * cog, n, F::one(), &wbig, Trans::Yes, &dybig, Trans::No, F::zero(), &mut dcols);
        let base = g * cin_g * geo.h * geo.w;
        geo.for_each_tap(|row, o, i| {
            dx.re[base + i] += dcols[row * n + o];
            dx.im[base + i] += dcols[(k + row) * n + o];
        });
    }
    Ok(ConvGrads { dx, dw, db })
}
