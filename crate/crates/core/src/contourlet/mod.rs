//! Shift-invariant contourlet decomposition computed in the frequency domain.
//!
//! Each level splits the running lowpass into a coarser lowpass and a
//! bandpass, and the bandpass is split into `2^j` angular wedges. No
//! subsampling happens, so every subband has the input's size, and the
//! masks partition unity: reconstruction is the plain sum of all subbands.

mod bank;
mod io;

pub use bank::{build_filter_bank, FilterBank};
pub use io::{read_pyramid, write_pyramid, load_pyramid, save_pyramid, PYRAMID_MAGIC};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Fft2, Real};

/// Lowpass residual plus `high[level][direction]` subbands, all `H × W × C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourletPyramid<T> {
    pub low: ComplexImage<T>,
    pub high: Vec<Vec<ComplexImage<T>>>,
}

impl<T: Real> ContourletPyramid<T> {
    pub fn levels(&self) -> usize {
        self.high.len()
    }

    pub fn directions(&self) -> usize {
        self.high.first().map_or(0, Vec::len)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.low.shape()
    }

    /// All subbands in storage order: lowpass, then level-major, direction-minor.
    pub fn subbands(&self) -> impl Iterator<Item = &ComplexImage<T>> {
        std::iter::once(&self.low).chain(self.high.iter().flatten())
    }

    pub fn cast<U: Real>(&self) -> ContourletPyramid<U> {
        ContourletPyramid {
            low: self.low.cast(),
            high: self.high.iter().map(|l| l.iter().map(|b| b.cast()).collect()).collect(),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        Ok(ContourletPyramid {
            low: self.low.crop(y0, x0, height, width)?,
            high: self
                .high
                .iter()
                .map(|l| l.iter().map(|b| b.crop(y0, x0, height, width)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
        })
    }

    /// Stacks the directional subbands of `level` along the channel axis,
    /// direction-major: channel `d·C + c` is channel `c` of direction `d`.
    pub fn stacked_level(&self, level: usize) -> Result<ComplexImage<T>> {
        let bands = self
            .high
            .get(level)
            .ok_or_else(|| Error::InvalidArgument(format!("level {level} out of {} levels", self.levels())))?;
        let (h, w, c) = self.shape();
        let n = bands.len();
        Ok(ComplexImage::from_fn(h, w, n * c, |y, x, k| bands[k / c].get(y, x, k % c)))
    }
}

fn apply_mask<T: Real>(spectrum: &[Complex<T>], mask: &[f64], out: &mut [Complex<T>]) {
    for ((o, s), m) in out.iter_mut().zip(spectrum).zip(mask) {
        *o = *s * T::of(*m);
    }
}

/// Decomposes every channel of `image` with `bank`.
pub fn decompose<T: Real>(image: &ComplexImage<T>, bank: &FilterBank) -> Result<ContourletPyramid<T>> {
    let (h, w, c) = image.shape();
    if (h, w) != (bank.height, bank.width) {
        return Err(Error::shape(
            format!("{}x{} image for this filter bank", bank.height, bank.width),
            format!("{h}x{w}"),
        ));
    }
    let fft = Fft2::<T>::new(h, w);
    let n_dir = bank.directions();
    let mut low = ComplexImage::zeros(h, w, c);
    let mut high: Vec<Vec<ComplexImage<T>>> = (0..bank.levels)
        .map(|_| (0..n_dir).map(|_| ComplexImage::zeros(h, w, c)).collect())
        .collect();

    let mut band = vec![Complex::new(T::zero(), T::zero()); h * w];
    let mut buf = band.clone();
    let mut scratch = band.clone();
    for ch in 0..c {
        let mut spectrum = image.plane(ch);
        fft.forward_plane(&mut spectrum);
        for i in 0..bank.levels {
            apply_mask(&spectrum, &bank.bandpass[i], &mut band);
            for d in 0..n_dir {
                apply_mask(&band, &bank.wedges[i][d], &mut buf);
                fft.inverse_plane(&mut buf);
                high[i][d].set_plane(ch, &buf);
            }
            apply_mask(&spectrum, &bank.lowpass[i], &mut scratch);
            std::mem::swap(&mut spectrum, &mut scratch);
        }
        fft.inverse_plane(&mut spectrum);
        low.set_plane(ch, &spectrum);
    }
    Ok(ContourletPyramid { low, high })
}

/// Inverse of [`decompose`]: the sum of all subbands.
pub fn reconstruct<T: Real>(pyramid: &ContourletPyramid<T>) -> Result<ComplexImage<T>> {
    let levels = pyramid.levels();
    let dirs = pyramid.directions();
    if levels == 0 || pyramid.high.iter().any(|l| l.len() != dirs) {
        return Err(Error::InvalidArgument("pyramid levels have inconsistent direction counts".into()));
    }
    let mut out = pyramid.low.clone();
    for band in pyramid.high.iter().flatten() {
        out.add_assign(band)?;
    }
    Ok(out)
}

/// Decomposition of reflect-padded scenes, cropped back to the scene size so
/// that subbands do not carry wrap-around artefacts from the periodic FFT.
#[derive(Debug, Clone)]
pub struct PaddedContourlet {
    pub bank: FilterBank,
    pub margin: usize,
}

impl PaddedContourlet {
    pub fn new(levels: usize, direction_exponent: u32, height: usize, width: usize, margin: usize) -> Result<Self> {
        if margin >= height || margin >= width {
            return Err(Error::InvalidArgument(format!(
                "margin {margin} must be smaller than the {height}x{width} scene"
            )));
        }
        let bank = build_filter_bank(levels, direction_exponent, height + 2 * margin, width + 2 * margin)?;
        Ok(PaddedContourlet { bank, margin })
    }

    pub fn decompose<T: Real>(&self, image: &ComplexImage<T>) -> Result<ContourletPyramid<T>> {
        let padded = image.reflect_pad(self.margin)?;
        let full = decompose(&padded, &self.bank)?;
        full.crop(self.margin, self.margin, image.height(), image.width())
    }
}
