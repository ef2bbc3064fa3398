//! Complex Gaussian diffusion: schedule, closed-form noising and the
//! ancestral reverse step.
//!
//! Noise has independent real and imaginary parts of unit variance, so
//! `E|ε|² = 2` per complex element.

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::Tensor;

/// Linear β schedule. Arrays are indexed by `t` in `0..=T`; index 0 holds
/// the clean-data convention `α₀ = ᾱ₀ = 1`, `β₀ = σ₀ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidArgument("diffusion needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let mut beta = vec![0.0; steps + 1];
    for (t, b) in beta.iter_mut().enumerate().skip(1) {
        *b = if steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * (t - 1) as f64 / (steps - 1) as f64
        };
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = vec![1.0; steps + 1];
    for t in 1..=steps {
        alpha_bar[t] = alpha_bar[t - 1] * alpha[t];
    }
    let mut sigma = vec![0.0; steps + 1];
    for t in 1..=steps {
        let var = (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * (1.0 - alpha[t]);
        sigma[t] = var.sqrt();
    }
    Ok(NoiseSchedule {
        steps,
        beta_start,
        beta_end,
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

impl NoiseSchedule {
    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::InvalidArgument(format!("timestep {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }
}

/// A clean input, its noised version at step `t`, and the noise used.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSample<F> {
    pub l0: Tensor<F>,
    pub t: usize,
    pub eps: Tensor<F>,
    pub lt: Tensor<F>,
}

/// Draws a complex standard Gaussian tensor (unit variance per part).
pub fn complex_noise<F: Real>(dims: &[usize], rng: &mut RngStream) -> Tensor<F> {
    let mut t = Tensor::zeros(dims);
    for i in 0..t.len() {
        t.re[i] = F::of(rng.normal());
        t.im[i] = F::of(rng.normal());
    }
    t
}

/// `√ᾱₜ·l0 + √(1-ᾱₜ)·eps`.
pub fn q_sample_with_noise<F: Real>(l0: &Tensor<F>, t: usize, eps: &Tensor<F>, schedule: &NoiseSchedule) -> Result<Tensor<F>> {
    schedule.check_t(t)?;
    if l0.dims() != eps.dims() {
        return Err(Error::shape(l0.dims(), eps.dims()));
    }
    let a = schedule.alpha_bar[t].sqrt();
    let b = (1.0 - schedule.alpha_bar[t]).sqrt();
    let mix = |x: &[F], e: &[F]| -> Vec<F> { x.iter().zip(e).map(|(x, e)| F::of(a * x.as_f64() + b * e.as_f64())).collect() };
    Tensor::from_parts(l0.dims(), mix(&l0.re, &eps.re), mix(&l0.im, &eps.im))
}

pub fn q_sample<F: Real>(l0: &Tensor<F>, t: usize, schedule: &NoiseSchedule, rng: &mut RngStream) -> Result<DiffusionSample<F>> {
    schedule.check_t(t)?;
    let eps = complex_noise(l0.dims(), rng);
    let lt = q_sample_with_noise(l0, t, &eps, schedule)?;
    Ok(DiffusionSample {
        l0: l0.clone(),
        t,
        eps,
        lt,
    })
}

/// `μ = (lt - ((1-αₜ)/√(1-ᾱₜ))·ε̂) / √αₜ`.
pub fn posterior_mean<F: Real>(lt: &Tensor<F>, t: usize, eps_hat: &Tensor<F>, schedule: &NoiseSchedule) -> Result<Tensor<F>> {
    schedule.check_t(t)?;
    if lt.dims() != eps_hat.dims() {
        return Err(Error::shape(lt.dims(), eps_hat.dims()));
    }
    let c = (1.0 - schedule.alpha[t]) / (1.0 - schedule.alpha_bar[t]).sqrt();
    let inv = 1.0 / schedule.alpha[t].sqrt();
    let mu = |x: &[F], e: &[F]| -> Vec<F> {
        x.iter()
            .zip(e)
            .map(|(x, e)| F::of((x.as_f64() - c * e.as_f64()) * inv))
            .collect()
    };
    Tensor::from_parts(lt.dims(), mu(&lt.re, &eps_hat.re), mu(&lt.im, &eps_hat.im))
}

/// Noise predictor `ε_θ(lt, t, knowledge)`.
pub trait Denoiser<F: Real> {
    fn predict(&self, lt: &Tensor<F>, t: usize, knowledge: Option<&Tensor<F>>) -> Result<Tensor<F>>;
}

/// One ancestral step `L_{t-1} = μ + σₜ z`. At `t = 1`, `σ₁ = 0` and no
/// randomness is consumed.
pub fn reverse_step<F: Real, D: Denoiser<F> + ?Sized>(
    lt: &Tensor<F>,
    t: usize,
    knowledge: Option<&Tensor<F>>,
    net: &D,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Tensor<F>> {
    let eps_hat = net.predict(lt, t, knowledge)?;
    let mut mu = posterior_mean(lt, t, &eps_hat, schedule)?;
    let s = schedule.sigma[t];
    if s > 0.0 {
        let z = complex_noise::<F>(lt.dims(), rng);
        for i in 0..mu.len() {
            mu.re[i] = F::of(mu.re[i].as_f64() + s * z.re[i].as_f64());
            mu.im[i] = F::of(mu.im[i].as_f64() + s * z.im[i].as_f64());
        }
    }
    Ok(mu)
}

/// Runs `T` reverse steps from pure noise.
pub fn sample_loop<F: Real, D: Denoiser<F> + ?Sized>(
    dims: &[usize],
    knowledge: Option<&Tensor<F>>,
    net: &D,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Tensor<F>> {
    let mut x = complex_noise(dims, rng);
    for t in (1..=schedule.steps).rev() {
        x = reverse_step(&x, t, knowledge, net, schedule, rng)?;
    }
    Ok(x)
}
