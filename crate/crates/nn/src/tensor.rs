use kcdm_core::numerics::{ComplexImage, Real};
use kcdm_core::{Complex, Error, Result};

/// Dense complex tensor with planar real and imaginary storage.
///
/// Activations use dims `[C, H, W]`; convolution weights use
/// `[C_out, C_in / groups, kH, kW]`; biases use `[C, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    dims: Vec<usize>,
    pub re: Vec<F>,
    pub im: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            re: vec![F::zero(); n],
            im: vec![F::zero(); n],
        }
    }

    pub fn from_parts(dims: &[usize], re: Vec<F>, im: Vec<F>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::shape(n, (re.len(), im.len())));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            re,
            im,
        })
    }

    pub fn scalar(re: F, im: F) -> Self {
        Tensor {
            dims: vec![1, 1, 1],
            re: vec![re],
            im: vec![im],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// `(C, H, W)` of a rank-3 activation.
    pub fn chw(&self) -> (usize, usize, usize) {
        debug_assert_eq!(self.dims.len(), 3, "activation tensors are rank 3");
        (self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn get(&self, i: usize) -> Complex<F> {
        Complex::new(self.re[i], self.im[i])
    }

    pub fn set(&mut self, i: usize, z: Complex<F>) {
        self.re[i] = z.re;
        self.im[i] = z.im;
    }

    pub fn reshaped(mut self, dims: &[usize]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.len() {
            return Err(Error::shape(self.len(), dims));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += *b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += *b;
        }
    }

    pub fn scale_real(&mut self, s: F) {
        self.re.iter_mut().chain(self.im.iter_mut()).for_each(|v| *v *= s);
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            re: self.re.iter().map(|v| U::of(v.as_f64())).collect(),
            im: self.im.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Converts an interleaved `H × W × C` raster to planar `[C, H, W]`.
    pub fn from_image(img: &ComplexImage<F>) -> Self {
        let (h, w, c) = img.shape();
        let mut t = Tensor::zeros(&[c, h, w]);
        for (p, px) in img.data().chunks_exact(c).enumerate() {
            for (ch, z) in px.iter().enumerate() {
                t.re[ch * h * w + p] = z.re;
                t.im[ch * h * w + p] = z.im;
            }
        }
        t
    }

    pub fn to_image(&self) -> ComplexImage<F> {
        let (c, h, w) = self.chw();
        ComplexImage::from_fn(h, w, c, |y, x, ch| {
            let i = (ch * h + y) * w + x;
            Complex::new(self.re[i], self.im[i])
        })
    }

    /// Copies a `size × size` window with top-left `(y0, x0)` from a `[C, H, W]` tensor.
    pub fn window(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        let (c, h, w) = self.chw();
        if y0 + height > h || x0 + width > w {
            return Err(Error::shape((h, w), (y0 + height, x0 + width)));
        }
        let mut out = Tensor::zeros(&[c, height, width]);
        for ch in 0..c {
            for y in 0..height {
                let src = (ch * h + y0 + y) * w + x0;
                let dst = (ch * height + y) * width;
                out.re[dst..dst + width].copy_from_slice(&self.re[src..src + width]);
                out.im[dst..dst + width].copy_from_slice(&self.im[src..src + width]);
            }
        }
        Ok(out)
    }
}
