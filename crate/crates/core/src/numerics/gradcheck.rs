//! Central finite differences over real coordinates.
//!
//! Complex values are treated as pairs of independent real coordinates, so the
//! gradient of a real scalar `f` at `z = a + ib` is reported as
//! `∂f/∂a + i ∂f/∂b`. This is the oracle every backpropagation test compares
//! against.

use num_complex::Complex;

use super::ComplexImage;

/// Central-difference gradient of `f` with respect to a flat real vector.
pub fn finite_diff_real(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central-difference gradient of a real scalar function of a complex image.
pub fn finite_diff_gradient(
    mut f: impl FnMut(&ComplexImage<f64>) -> f64,
    x: &ComplexImage<f64>,
    step: f64,
) -> ComplexImage<f64> {
    let (h, w, c) = x.shape();
    let flat: Vec<f64> = x.data().iter().flat_map(|z| [z.re, z.im]).collect();
    let grad = finite_diff_real(
        |v| {
            let data = v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
            f(&ComplexImage::from_vec(h, w, c, data).expect("shape preserved"))
        },
        &flat,
        step,
    );
    let data = grad.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
    ComplexImage::from_vec(h, w, c, data).expect("shape preserved")
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
