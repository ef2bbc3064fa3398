use num_complex::Complex;

use super::Real;
use crate::error::{Error, Result};

/// Multi-channel complex raster, row-major with channels interleaved per pixel:
/// element `(y, x, c)` lives at `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexImage<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![Complex::new(T::zero(), T::zero()); height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(height * width * channels, data.len()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex<T>,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
    #[inline]
    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> Complex<T> {
        self.data[self.index(y, x, c)]
    }
    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: Complex<T>) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// Copies channel `c` out as a dense `height × width` plane.
    pub fn plane(&self, c: usize) -> Vec<Complex<T>> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn set_plane(&mut self, c: usize, plane: &[Complex<T>]) {
        debug_assert_eq!(plane.len(), self.height * self.width);
        let ch = self.channels;
        for (dst, src) in self.data.iter_mut().skip(c).step_by(ch).zip(plane) {
            *dst = *src;
        }
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr().as_f64()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm().as_f64())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: Complex<T>) {
        for z in self.data.iter_mut() {
            *z = *z * s;
        }
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> ComplexImage<U> {
        ComplexImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::of(z.re.as_f64()), U::of(z.im.as_f64())))
                .collect(),
        }
    }

    /// Cyclic shift by `(dy, dx)` pixels: output `(y, x)` takes input `(y - dy, x - dx)`.
    pub fn cyclic_shift(&self, dy: usize, dx: usize) -> Self {
        let (h, w) = (self.height, self.width);
        Self::from_fn(h, w, self.channels, |y, x, c| {
            self.get((y + h - dy % h) % h, (x + w - dx % w) % w, c)
        })
    }

    /// Crops the window starting at `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {height}x{width} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, self.channels, |y, x, c| {
            self.get(y0 + y, x0 + x, c)
        }))
    }

    /// Symmetric (mirror without edge repeat) padding by `margin` on every side.
    pub fn reflect_pad(&self, margin: usize) -> Result<Self> {
        if margin >= self.height || margin >= self.width {
            return Err(Error::InvalidArgument(format!(
                "reflect margin {margin} must be smaller than {}x{}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height as isize, self.width as isize);
        let m = margin as isize;
        Ok(Self::from_fn(
            self.height + 2 * margin,
            self.width + 2 * margin,
            self.channels,
            |y, x, c| {
                let sy = reflect_index(y as isize - m, h);
                let sx = reflect_index(x as isize - m, w);
                self.get(sy, sx, c)
            },
        ))
    }
}

/// Maps an out-of-range coordinate back into `[0, n)` by mirroring about the
/// edge pixels (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut r = i.rem_euclid(period);
    if r >= n {
        r = period - r;
    }
    r as usize
}
