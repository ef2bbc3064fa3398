//! Synthetic complex-Wishart scenes.

use nalgebra::{SymmetricEigen, Vector3};

use super::{is_hermitian_psd, multilook, CoherencyField, LabelMap, Mat3c, PauliVector, C64};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

fn diag(a: f64, b: f64, c: f64) -> Mat3c {
    Mat3c::from_diagonal(&Vector3::new(C64::new(a, 0.0), C64::new(b, 0.0), C64::new(c, 0.0)))
}

/// Three class covariances with distinct dominant scattering:
/// surface-like, double-bounce-like (with a complex `T12` coupling) and
/// volume-like.
pub fn builtin_sigmas() -> Vec<Mat3c> {
    let surface = diag(1.0, 0.1, 0.05);
    let mut double = diag(0.1, 1.0, 0.05);
    // |T12|^2 must stay below T11*T22 = 0.1 for the matrix to be PSD.
    let t12 = C64::new(0.15, 0.1);
    double[(0, 1)] = t12;
    double[(1, 0)] = t12.conj();
    let volume = diag(0.4, 0.3, 0.6);
    vec![surface, double, volume]
}

/// Rejects covariances that are not Hermitian positive semidefinite.
pub fn validate_sigma(class: usize, sigma: &Mat3c) -> Result<()> {
    if !sigma.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NotPsd {
            class,
            reason: "non-finite entry".into(),
        });
    }
    if !is_hermitian_psd(sigma, 1e-10, 0.0) {
        return Err(Error::NotPsd {
            class,
            reason: "Hermitian check or principal minor failed".into(),
        });
    }
    let eig = SymmetricEigen::new(*sigma);
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -1e-12 {
            return Err(Error::NotPsd {
                class,
                reason: format!("eigenvalue {min:.3e} < 0"),
            });
        }
    }
    Ok(())
}

/// Scene layout exercising straight edges, a disc and a two-pixel strip.
///
/// Classes `0..classes-1` tile the scene as vertical bands; the last class
/// forms a disc in the upper half and a thin horizontal strip in the lower half.
pub fn default_layout(height: usize, width: usize, classes: usize) -> Result<LabelMap> {
    if classes < 2 {
        return Err(Error::InvalidArgument("at least two classes required".into()));
    }
    if height < 16 || width < 16 {
        return Err(Error::InvalidArgument(format!("layout needs at least 16x16, got {height}x{width}")));
    }
    let bands = classes - 1;
    let last = (classes - 1) as u8;
    let (cy, cx) = (height as f64 * 0.35, width as f64 * 0.5);
    let radius = height.min(width) as f64 * 0.18;
    let strip_row = (height as f64 * 0.78) as usize;
    let (strip_x0, strip_x1) = (width / 8, width - width / 8);

    let mut labels = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            let in_disc = dy * dy + dx * dx <= radius * radius;
            let in_strip = (y == strip_row || y == strip_row + 1) && x >= strip_x0 && x < strip_x1;
            let label = if in_disc || in_strip {
                last
            } else {
                ((x * bands) / width).min(bands - 1) as u8
            };
            labels.push(label);
        }
    }
    LabelMap::new(height, width, classes, labels)
}

/// Per-pixel multilook Wishart samples.
///
/// Pixel `p` of class `c` averages `looks` outer products of
/// `k = A z`, where `A Aᴴ = Σ_c` and `z` has independent complex entries with
/// per-part variance 1/2, so `E[k kᴴ] = Σ_c`. Each pixel draws from its own
/// substream of `rng`'s seed, so the result does not depend on traversal order.
pub fn synth_scene(
    layout: &LabelMap,
    class_sigmas: &[Mat3c],
    looks: u8,
    rng: &RngStream,
) -> Result<CoherencyField> {
    if looks == 0 {
        return Err(Error::InvalidArgument("looks must be at least 1".into()));
    }
    if class_sigmas.len() < layout.classes {
        return Err(Error::InvalidArgument(format!(
            "{} classes need {} covariance matrices, got {}",
            layout.classes,
            layout.classes,
            class_sigmas.len()
        )));
    }
    let mut factors = Vec::with_capacity(class_sigmas.len());
    for (c, sigma) in class_sigmas.iter().enumerate() {
        validate_sigma(c, sigma)?;
        let eig = SymmetricEigen::new(*sigma);
        let mut a = Mat3c::zeros();
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt();
            }
        }
        factors.push(a);
    }

    let part_std = 0.5f64.sqrt();
    let mut t = Vec::with_capacity(layout.labels.len());
    let mut ks = Vec::with_capacity(looks as usize);
    for (p, &label) in layout.labels.iter().enumerate() {
        if label as usize >= layout.classes {
            return Err(Error::InvalidArgument(format!("pixel {p} is unlabeled; synthesis needs a full layout")));
        }
        let a = &factors[label as usize];
        let mut px_rng = RngStream::substream(rng.seed(), p as u64);
        ks.clear();
        for _ in 0..looks {
            let z = Vector3::new(
                px_rng.complex_normal(part_std),
                px_rng.complex_normal(part_std),
                px_rng.complex_normal(part_std),
            );
            let k = a * z;
            ks.push(PauliVector { k: [k[0], k[1], k[2]] });
        }
        t.push(multilook(&ks)?);
    }
    Ok(CoherencyField {
        height: layout.height,
        width: layout.width,
        looks,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polsar::hermitian_eigenvalues;

    #[test]
    fn builtin_sigmas_are_psd() {
        for (c, s) in builtin_sigmas().iter().enumerate() {
            validate_sigma(c, s).unwrap();
        }
    }

    #[test]
    fn non_psd_sigma_names_the_class() {
        let mut bad = builtin_sigmas();
        bad[1][(0, 1)] = C64::new(0.3, 0.2);
        bad[1][(1, 0)] = C64::new(0.3, -0.2);
        let layout = LabelMap::vertical_split(4, 4);
        let err = synth_scene(&layout, &bad, 4, &RngStream::new(0)).unwrap_err();
        match err {
            Error::NotPsd { class, .. } => assert_eq!(class, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_sigma_many_looks_recovers_identity() {
        let layout = LabelMap::new(1, 1, 2, vec![0]).unwrap();
        let sig = vec![Mat3c::identity(), Mat3c::identity()];
        // 10^4 looks at one pixel via repeated 250-look syntheses averaged.
        let mut acc = Mat3c::zeros();
        for s in 0..40 {
            let f = synth_scene(&layout, &sig, 250, &RngStream::new(s)).unwrap();
            acc += f.t[0];
        }
        acc /= C64::new(40.0, 0.0);
        assert!((acc - Mat3c::identity()).norm() <= 0.05);
    }

    #[test]
    fn vertical_split_region_means_match_sigmas() {
        let layout = LabelMap::vertical_split(32, 32);
        let sig = builtin_sigmas();
        let f = synth_scene(&layout, &sig[..2], 16, &RngStream::new(3)).unwrap();
        for c in 0..2 {
            let px = layout.pixels_of(c);
            let mut mean = Mat3c::zeros();
            for &p in &px {
                assert!(is_hermitian_psd(&f.t[p], 1e-10, 1e-9));
                mean += f.t[p];
            }
            mean /= C64::new(px.len() as f64, 0.0);
            assert!((mean - sig[c]).norm() <= 0.1 * sig[c].norm(), "class {c}");
        }
    }

    #[test]
    fn single_look_is_rank_one() {
        let layout = LabelMap::vertical_split(8, 8);
        let f = synth_scene(&layout, &builtin_sigmas()[..2], 1, &RngStream::new(5)).unwrap();
        for t in &f.t {
            let ev = hermitian_eigenvalues(t);
            assert!(ev[1].abs() <= 1e-9 && ev[2].abs() <= 1e-9, "{ev:?}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let layout = default_layout(32, 32, 3).unwrap();
        let sig = builtin_sigmas();
        let a = synth_scene(&layout, &sig, 4, &RngStream::new(0)).unwrap();
        let b = synth_scene(&layout, &sig, 4, &RngStream::new(0)).unwrap();
        let c = synth_scene(&layout, &sig, 4, &RngStream::new(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn region_mean_error_shrinks_with_more_looks() {
        let layout = LabelMap::vertical_split(16, 16);
        let sig = builtin_sigmas();
        for seed in 0..5 {
            let err = |looks: u8| {
                let f = synth_scene(&layout, &sig[..2], looks, &RngStream::new(seed)).unwrap();
                let px = layout.pixels_of(0);
                let mut mean = Mat3c::zeros();
                for &p in &px {
                    mean += f.t[p];
                }
                mean /= C64::new(px.len() as f64, 0.0);
                (mean - sig[0]).norm()
            };
            assert!(err(64) < err(1), "seed {seed}");
        }
    }

    #[test]
    fn default_layout_has_all_structures() {
        let l = default_layout(128, 128, 3).unwrap();
        for c in 0..3 {
            assert!(!l.pixels_of(c).is_empty());
        }
        let row = (128.0 * 0.78) as usize;
        assert_eq!(l.get(row, 64), 2);
        assert_eq!(l.get(row + 1, 64), 2);
        assert_ne!(l.get(row + 2, 64), 2);
        assert_eq!(l.get(45, 64), 2);
        assert_eq!(l.get(110, 10), 0);
        assert_eq!(l.get(110, 120), 1);
    }
}
