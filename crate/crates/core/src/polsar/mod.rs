//! PolSAR physical data model: scattering samples, Pauli vectors, multilook
//! coherency matrices, synthetic Wishart scenes and the dataset file format.

mod dataset;
mod scene;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC};
pub use scene::{builtin_sigmas, default_layout, synth_scene, validate_sigma};

use nalgebra::Matrix3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

pub type C64 = Complex<f64>;
/// 3×3 complex matrix (coherency / covariance).
pub type Mat3c = Matrix3<C64>;

/// Number of complex channels used to pack one coherency matrix.
pub const COHERENCY_CHANNELS: usize = 6;

/// Label value for pixels without ground truth.
pub const UNLABELED: u8 = 255;

/// Backscatter amplitudes of one resolution cell under reciprocity (`S_hv = S_vh`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringSample {
    pub s_hh: C64,
    pub s_hv: C64,
    pub s_vv: C64,
}

/// Scattering vector in the Pauli basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliVector {
    pub k: [C64; 3],
}

impl PauliVector {
    pub fn norm_sqr(&self) -> f64 {
        self.k.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `k = (S_hh + S_vv, S_hh - S_vv, 2 S_hv) / √2`.
pub fn pauli_vectorize(s: &ScatteringSample) -> PauliVector {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    PauliVector {
        k: [(s.s_hh + s.s_vv) * r, (s.s_hh - s.s_vv) * r, s.s_hv * (2.0 * r)],
    }
}

/// Multilook average `T = (1/n) Σ k kᴴ`.
pub fn multilook(samples: &[PauliVector]) -> Result<Mat3c> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("multilook needs at least one look".into()));
    }
    let mut t = Mat3c::zeros();
    for s in samples {
        for i in 0..3 {
            for j in 0..3 {
                t[(i, j)] += s.k[i] * s.k[j].conj();
            }
        }
    }
    Ok(t / C64::new(samples.len() as f64, 0.0))
}

/// Per-pixel class indices, row-major; [`UNLABELED`] marks pixels without truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, classes: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(height * width, labels.len()));
        }
        if classes < 2 || classes > UNLABELED as usize {
            return Err(Error::InvalidArgument(format!("class count {classes} must lie in 2..=254")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != UNLABELED && l as usize >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            height,
            width,
            classes,
            labels,
        })
    }

    /// Left half class 0, right half class 1.
    pub fn vertical_split(height: usize, width: usize) -> Self {
        let labels = (0..height * width)
            .map(|i| if i % width < width / 2 { 0 } else { 1 })
            .collect();
        Self {
            height,
            width,
            classes: 2,
            labels,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }

    /// Pixel indices of class `c`, ascending.
    pub fn pixels_of(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Grid of multilook coherency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherencyField {
    pub height: usize,
    pub width: usize,
    pub looks: u8,
    pub t: Vec<Mat3c>,
}

impl CoherencyField {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> &Mat3c {
        &self.t[y * self.width + x]
    }

    /// The same field with every entry rounded to `f32`, which is what the
    /// dataset file stores. Diagonals stay real and the matrix stays Hermitian.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for t in out.t.iter_mut() {
            for i in 0..3 {
                t[(i, i)] = C64::new(t[(i, i)].re as f32 as f64, 0.0);
                for j in i + 1..3 {
                    let z = C64::new(t[(i, j)].re as f32 as f64, t[(i, j)].im as f32 as f64);
                    t[(i, j)] = z;
                    t[(j, i)] = z.conj();
                }
            }
        }
        out
    }
}

/// Checks Hermitian symmetry, real non-negative diagonal and non-negative
/// leading principal minors within the given tolerances.
pub fn is_hermitian_psd(t: &Mat3c, herm_tol: f64, minor_tol: f64) -> bool {
    for i in 0..3 {
        for j in 0..3 {
            if (t[(i, j)] - t[(j, i)].conj()).norm() > herm_tol {
                return false;
            }
        }
        if t[(i, i)].im.abs() > herm_tol || t[(i, i)].re < -minor_tol {
            return false;
        }
    }
    let m2 = (t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)]).re;
    let m3 = t.determinant().re;
    m2 >= -minor_tol && m3 >= -minor_tol
}

/// Eigenvalues of a Hermitian 3×3 matrix, descending.
pub fn hermitian_eigenvalues(t: &Mat3c) -> [f64; 3] {
    let eig = nalgebra::SymmetricEigen::new(*t);
    let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Packs each coherency matrix into six complex channels
/// `(T11, T22, T33, T12, T13, T23)`; the first three have zero imaginary part.
pub fn to_channels(field: &CoherencyField) -> ComplexImage<f64> {
    ComplexImage::from_fn(field.height, field.width, COHERENCY_CHANNELS, |y, x, c| {
        let t = field.get(y, x);
        match c {
            0 => C64::new(t[(0, 0)].re, 0.0),
            1 => C64::new(t[(1, 1)].re, 0.0),
            2 => C64::new(t[(2, 2)].re, 0.0),
            3 => t[(0, 1)],
            4 => t[(0, 2)],
            _ => t[(1, 2)],
        }
    })
}

/// Inverse of [`to_channels`].
pub fn from_channels(image: &ComplexImage<f64>, looks: u8) -> Result<CoherencyField> {
    if image.channels() != COHERENCY_CHANNELS {
        return Err(Error::shape(COHERENCY_CHANNELS, image.channels()));
    }
    let mut t = Vec::with_capacity(image.height() * image.width());
    for px in image.data().chunks_exact(COHERENCY_CHANNELS) {
        let (d0, d1, d2) = (C64::new(px[0].re, 0.0), C64::new(px[1].re, 0.0), C64::new(px[2].re, 0.0));
        t.push(Mat3c::new(
            d0,
            px[3],
            px[4],
            px[3].conj(),
            d1,
            px[5],
            px[4].conj(),
            px[5].conj(),
            d2,
        ));
    }
    Ok(CoherencyField {
        height: image.height(),
        width: image.width(),
        looks,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn pauli_examples() {
        let s2 = 2f64.sqrt();
        let k = pauli_vectorize(&ScatteringSample {
            s_hh: c(1.0, 0.0),
            s_hv: c(0.0, 0.0),
            s_vv: c(1.0, 0.0),
        });
        assert!(close(k.k[0], c(s2, 0.0)) && close(k.k[1], c(0.0, 0.0)) && close(k.k[2], c(0.0, 0.0)));
        let k = pauli_vectorize(&ScatteringSample {
            s_hh: c(1.0, 0.0),
            s_hv: c(0.0, 0.0),
            s_vv: c(-1.0, 0.0),
        });
        assert!(close(k.k[0], c(0.0, 0.0)) && close(k.k[1], c(s2, 0.0)));
        let k = pauli_vectorize(&ScatteringSample {
            s_hh: c(0.0, 0.0),
            s_hv: c(0.0, 1.0),
            s_vv: c(0.0, 0.0),
        });
        assert!(close(k.k[2], c(0.0, s2)));
        assert!((k.norm_sqr() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_preserves_span_energy() {
        let mut rng = RngStream::new(17);
        for _ in 0..1000 {
            let s = ScatteringSample {
                s_hh: rng.complex_normal(1.0),
                s_hv: rng.complex_normal(1.0),
                s_vv: rng.complex_normal(1.0),
            };
            let span = s.s_hh.norm_sqr() + s.s_vv.norm_sqr() + 2.0 * s.s_hv.norm_sqr();
            assert!((pauli_vectorize(&s).norm_sqr() - span).abs() <= 1e-10 * span.max(1.0));
        }
    }

    #[test]
    fn multilook_examples() {
        let k = PauliVector {
            k: [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        };
        let t = multilook(&[k]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if (i, j) == (0, 0) { 1.0 } else { 0.0 };
                assert!(close(t[(i, j)], c(want, 0.0)));
            }
        }
        let k = PauliVector {
            k: [c(0.3, -1.0), c(2.0, 0.5), c(-0.7, 0.1)],
        };
        let one = multilook(&[k]).unwrap();
        let many = multilook(&[k; 7]).unwrap();
        assert!((one - many).norm() < 1e-12);
        assert!(multilook(&[]).is_err());
    }

    #[test]
    fn multilook_is_hermitian_psd_for_random_inputs() {
        let mut rng = RngStream::new(4);
        for n in 1..6 {
            let ks: Vec<PauliVector> = (0..n)
                .map(|_| PauliVector {
                    k: [rng.complex_normal(1.0), rng.complex_normal(1.0), rng.complex_normal(1.0)],
                })
                .collect();
            let t = multilook(&ks).unwrap();
            assert!(is_hermitian_psd(&t, 1e-10, 1e-9));
            assert!(hermitian_eigenvalues(&t).iter().all(|&e| e >= -1e-9));
        }
    }

    #[test]
    fn multilook_converges_to_generating_covariance() {
        let sigma = builtin_sigmas()[1];
        let eig = nalgebra::SymmetricEigen::new(sigma);
        let mut rng = RngStream::new(9);
        let ks: Vec<PauliVector> = (0..10_000)
            .map(|_| {
                let z = nalgebra::Vector3::new(
                    rng.complex_normal(0.5f64.sqrt()),
                    rng.complex_normal(0.5f64.sqrt()),
                    rng.complex_normal(0.5f64.sqrt()),
                );
                let mut k = nalgebra::Vector3::<C64>::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        k[i] += eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt() * z[j];
                    }
                }
                PauliVector { k: [k[0], k[1], k[2]] }
            })
            .collect();
        let t = multilook(&ks).unwrap();
        assert!((t - sigma).norm() <= 0.05 * sigma.norm());
    }

    #[test]
    fn channel_packing_round_trips_and_has_real_diagonals() {
        let sigmas = builtin_sigmas();
        let layout = LabelMap::vertical_split(8, 8);
        let field = synth_scene(&layout, &sigmas[..2], 3, &RngStream::new(1)).unwrap();
        let img = to_channels(&field);
        for px in img.data().chunks_exact(6) {
            assert!(px[..3].iter().all(|z| z.im == 0.0));
        }
        assert_eq!(from_channels(&img, 3).unwrap(), field);
    }

    #[test]
    fn identity_matrix_packs_to_unit_diagonal() {
        let field = CoherencyField {
            height: 1,
            width: 1,
            looks: 1,
            t: vec![Mat3c::identity()],
        };
        let img = to_channels(&field);
        let want = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        for (z, w) in img.data().iter().zip(want) {
            assert_eq!(*z, c(w, 0.0));
        }
    }
}
