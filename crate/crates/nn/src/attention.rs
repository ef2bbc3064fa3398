//! Complex scaled dot-product attention.
//!
//! With queries `Q` (`D × Nq`), keys `K` and values `V` (`D × Nk`):
//! `S = Qᵀ conj(K) / √D`, `A = softmax(Re S) + i softmax(Im S)` row-wise,
//! and the output is `V Aᵀ` (`D × Nq`).

use kcdm_core::numerics::{gemm, Real, Trans};
use kcdm_core::{Error, Result};

use crate::tensor::Tensor;

pub(crate) struct AttentionCache<F> {
    pub ar: Vec<F>,
    pub ai: Vec<F>,
}

fn softmax_rows<F: Real>(m: &mut [F], cols: usize) {
    for row in m.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

fn dims<F: Real>(q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>) -> Result<(usize, usize, usize)> {
    let (d, hq, wq) = q.chw();
    let (dk, hk, wk) = k.chw();
    if dk != d || v.dims() != k.dims() {
        return Err(Error::shape(
            format!("keys/values with {d} channels matching each other"),
            (k.dims(), v.dims()),
        ));
    }
    Ok((d, hq * wq, hk * wk))
}

pub(crate) fn attention_forward<F: Real>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
) -> Result<(Tensor<F>, AttentionCache<F>)> {
    let (d, nq, nk) = dims(q, k, v)?;
    let s = F::of(1.0 / (d as f64).sqrt());
    let mut ar = vec![F::zero(); nq * nk];
    let mut ai = vec![F::zero(); nq * nk];
    gemm(nq, d, nk, s, &q.re, Trans::Yes, &k.re, Trans::No, F::zero(), &mut ar);
    gemm(nq, d, nk, s, &q.im, Trans::Yes, &k.im, Trans::No, F::one(), &mut ar);
    gemm(nq, d, nk, s, &q.im, Trans::Yes, &k.re, Trans::No, F::zero(), &mut ai);
    gemm(nq, d, nk, -s, &q.re, Trans::Yes, &k.im, Trans::No, F::one(), &mut ai);
    softmax_rows(&mut ar, nk);
    softmax_rows(&mut ai, nk);

    let mut y = Tensor::zeros(q.dims());
    let one = F::one();
    gemm(d, nk, nq, one, &v.re, Trans::No, &ar, Trans::Yes, F::zero(), &mut y.re);
    gemm(d, nk, nq, -one, &v.im, Trans::No, &ai, Trans::Yes, one, &mut y.re);
    gemm(d, nk, nq, one, &v.im, Trans::No, &ar, Trans::Yes, F::zero(), &mut y.im);
    gemm(d, nk, nq, one, &v.re, Trans::No, &ai, Trans::Yes, one, &mut y.im);
    Ok((y, AttentionCache { ar, ai }))
}

/// Returns `(dQ, dK, dV)`.
pub(crate) fn attention_backward<F: Real>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    cache: &AttentionCache<F>,
    dy: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (d, nq, nk) = dims(q, k, v)?;
    let s = F::of(1.0 / (d as f64).sqrt());
    let (one, zero) = (F::one(), F::zero());
    let (ar, ai) = (&cache.ar, &cache.ai);

    let mut dv = Tensor::zeros(v.dims());
    gemm(d, nq, nk, one, &dy.re, Trans::No, ar, Trans::No, zero, &mut dv.re);
    gemm(d, nq, nk, one, &dy.im, Trans::No, ai, Trans::No, one, &mut dv.re);
    gemm(d, nq, nk, one, &dy.im, Trans::No, ar, Trans::No, zero, &mut dv.im);
    gemm(d, nq, nk, -one, &dy.re, Trans::No, ai, Trans::No, one, &mut dv.im);

    let mut dsr = vec![zero; nq * nk];
    let mut dsi = vec![zero; nq * nk];
    gemm(nq, d, nk, one, &dy.re, Trans::Yes, &v.re, Trans::No, zero, &mut dsr);
    gemm(nq, d, nk, one, &dy.im, Trans::Yes, &v.im, Trans::No, one, &mut dsr);
    gemm(nq, d, nk, one, &dy.im, Trans::Yes, &v.re, Trans::No, zero, &mut dsi);
    gemm(nq, d, nk, -one, &dy.re, Trans::Yes, &v.im, Trans::No, one, &mut dsi);
    for (da, a) in [(&mut dsr, ar), (&mut dsi, ai)] {
        for (grow, arow) in da.chunks_exact_mut(nk).zip(a.chunks_exact(nk)) {
            let dot: F = grow.iter().zip(arow).map(|(g, p)| *g * *p).sum();
            for (g, p) in grow.iter_mut().zip(arow) {
                *g = *p * (*g - dot);
            }
        }
    }

    let mut dq = Tensor::zeros(q.dims());
    gemm(d, nk, nq, s, &k.re, Trans::No, &dsr, Trans::Yes, zero, &mut dq.re);
    gemm(d, nk, nq, -s, &k.im, Trans::No, &dsi, Trans::Yes, one, &mut dq.re);
    gemm(d, nk, nq, s, &k.im, Trans::No, &dsr, Trans::Yes, zero, &mut dq.im);
    gemm(d, nk, nq, s, &k.re, Trans::No, &dsi, Trans::Yes, one, &mut dq.im);

    let mut dk = Tensor::zeros(k.dims());
    gemm(d, nq, nk, s, &q.re, Trans::No, &dsr, Trans::No, zero, &mut dk.re);
    gemm(d, nq, nk, s, &q.im, Trans::No, &dsi, Trans::No, one, &mut dk.re);
    gemm(d, nq, nk, s, &q.im, Trans::No, &dsr, Trans::No, zero, &mut dk.im);
    gemm(d, nq, nk, -s, &q.re, Trans::No, &dsi, Trans::No, one, &mut dk.im);
    Ok((dq, dk, dv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use kcdm_core::numerics::RngStream;
    use kcdm_core::Complex;

    fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        let re = (0..n).map(|_| rng.normal()).collect();
        let im = (0..n).map(|_| rng.normal()).collect();
        Tensor::from_parts(dims, re, im).unwrap()
    }

    /// Per-query loops written directly from the definition.
    fn brute_force(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Tensor<f64> {
        let (d, hq, wq) = q.chw();
        let (_, hk, wk) = k.chw();
        let (nq, nk) = (hq * wq, hk * wk);
        let mut y = Tensor::zeros(q.dims());
        for n in 0..nq {
            let scores: Vec<Complex<f64>> = (0..nk)
                .map(|m| {
                    (0..d)
                        .map(|c| q.get(c * nq + n) * k.get(c * nk + m).conj())
                        .sum::<Complex<f64>>()
                        / (d as f64).sqrt()
                })
                .collect();
            let soft = |f: &dyn Fn(&Complex<f64>) -> f64| -> Vec<f64> {
                let e: Vec<f64> = scores.iter().map(|z| f(z).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|x| x / z).collect()
            };
            let (pr, pi) = (soft(&|z| z.re), soft(&|z| z.im));
            for c in 0..d {
                let acc: Complex<f64> = (0..nk).map(|m| v.get(c * nk + m) * Complex::new(pr[m], pi[m])).sum();
                y.set(c * nq + n, acc);
            }
        }
        y
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = RngStream::new(3);
        for &(d, hq, wq, hk, wk) in &[(4, 3, 3, 2, 2), (8, 4, 4, 4, 4), (2, 1, 5, 3, 1)] {
            let q = random(&[d, hq, wq], &mut rng);
            let k = random(&[d, hk, wk], &mut rng);
            let v = random(&[d, hk, wk], &mut rng);
            let (y, cache) = attention_forward(&q, &k, &v).unwrap();
            assert!(y.max_abs_diff(&brute_force(&q, &k, &v)) <= 1e-12);
            for row in cache.ar.chunks(hk * wk).chain(cache.ai.chunks(hk * wk)) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_keys_are_rejected() {
        let mut rng = RngStream::new(4);
        let q = random(&[4, 2, 2], &mut rng);
        let k = random(&[3, 2, 2], &mut rng);
        assert!(attention_forward(&q, &k, &k).is_err());
    }
}
