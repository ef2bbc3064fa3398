//! Shared numeric building blocks: complex rasters, seeded sampling, FFT,
//! PCA and the finite-difference gradient oracle.

mod fft;
mod gradcheck;
mod image;
mod pca;
mod real;
mod rng;

pub use fft::{fft2, ifft2, Fft2};
pub use gradcheck::{finite_diff_gradient, finite_diff_real, max_relative_error};
pub use image::{reflect_index, ComplexImage};
pub use pca::{pca_fit, pca_inverse, pca_transform, PcaModel};
pub use real::{gemm, Real, Trans};
pub use rng::{mix64, sample_complex_gaussian, RngStream};
