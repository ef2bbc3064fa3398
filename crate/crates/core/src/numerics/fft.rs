//! Per-channel 2D FFT over [`ComplexImage`]s.
//!
//! Forward transforms are unnormalized; the inverse divides by `H·W`.
//! rustfft handles arbitrary lengths (mixed radix plus Bluestein), so no
//! padding to a convenient size is needed here.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{ComplexImage, Real};

/// Reusable row/column plans for one image size.
pub struct Fft2<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// In-place unnormalized forward transform of one `height × width` plane.
    pub fn forward_plane(&self, plane: &mut [Complex<T>]) {
        self.run(plane, false);
    }

    /// In-place normalized inverse transform of one plane.
    pub fn inverse_plane(&self, plane: &mut [Complex<T>]) {
        self.run(plane, true);
        let scale = T::one() / T::of((self.height * self.width) as f64);
        for z in plane.iter_mut() {
            *z = *z * scale;
        }
    }

    fn run(&self, plane: &mut [Complex<T>], inverse: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(plane.len(), h * w, "plane size does not match FFT plan");
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(plane);
        let mut column = vec![Complex::new(T::zero(), T::zero()); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            cols.process(&mut column);
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }

    pub fn forward(&self, image: &ComplexImage<T>) -> ComplexImage<T> {
        self.map_planes(image, |p| self.forward_plane(p))
    }

    pub fn inverse(&self, image: &ComplexImage<T>) -> ComplexImage<T> {
        self.map_planes(image, |p| self.inverse_plane(p))
    }

    fn map_planes(&self, image: &ComplexImage<T>, f: impl Fn(&mut [Complex<T>])) -> ComplexImage<T> {
        assert_eq!((image.height(), image.width()), (self.height, self.width));
        let mut out = ComplexImage::zeros(image.height(), image.width(), image.channels());
        for c in 0..image.channels() {
            let mut plane = image.plane(c);
            f(&mut plane);
            out.set_plane(c, &plane);
        }
        out
    }
}

/// Unnormalized forward 2D FFT of every channel.
pub fn fft2<T: Real>(image: &ComplexImage<T>) -> ComplexImage<T> {
    Fft2::new(image.height(), image.width()).forward(image)
}

/// Inverse 2D FFT of every channel (divides by `H·W`).
pub fn ifft2<T: Real>(image: &ComplexImage<T>) -> ComplexImage<T> {
    Fft2::new(image.height(), image.width()).inverse(image)
}
