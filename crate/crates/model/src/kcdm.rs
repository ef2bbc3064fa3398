//! The guided denoiser: knowledge network plus U-Net, and its training step.

use rayon::prelude::*;

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::{Adam, Grads, Graph, ParamStore, Tensor, Var};

use crate::diffusion::{complex_noise, q_sample_with_noise, Denoiser, NoiseSchedule};
use crate::skem::Skem;
use crate::unet::{UNet, UNetOutput};

/// U-Net noise predictor, optionally conditioned on knowledge distilled from
/// high-frequency subbands.
#[derive(Debug, Clone)]
pub struct Kcdm {
    pub unet: UNet,
    pub skem: Option<Skem>,
}

impl Kcdm {
    /// `high` is the stacked high-frequency input of the knowledge network;
    /// it is required exactly when the model is guided.
    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, lt: Var, t: usize, high: Option<Var>) -> Result<UNetOutput> {
        let knowledge = match (&self.skem, high) {
            (Some(skem), Some(h)) => Some(skem.forward(g, h)?),
            (None, None) => None,
            (Some(_), None) => return Err(Error::InvalidArgument("guided model needs high-frequency input".into())),
            (None, Some(_)) => return Err(Error::InvalidArgument("unguided model got high-frequency input".into())),
        };
        self.unet.forward(g, lt, t, knowledge)
    }

    /// Stores the knowledge tensor for `high`, if guided.
    pub fn knowledge<F: Real>(&self, store: &ParamStore<F>, high: &Tensor<F>) -> Result<Tensor<F>> {
        let skem = self
            .skem
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("unguided model has no knowledge network".into()))?;
        let mut g = Graph::new(store);
        let h = g.input(high.clone());
        let k = skem.forward(&mut g, h)?;
        Ok(g.value(k).clone())
    }
}

/// One clean low-frequency patch and, for guided models, its stacked
/// high-frequency subbands.
#[derive(Debug, Clone)]
pub struct TrainItem<F> {
    pub l0: Tensor<F>,
    pub high: Option<Tensor<F>>,
}

/// Denoiser for a fixed high-frequency conditioning input.
pub struct BoundKcdm<'a, F> {
    pub model: &'a Kcdm,
    pub store: &'a ParamStore<F>,
    pub high: Option<&'a Tensor<F>>,
}

impl<F: Real> Denoiser<F> for BoundKcdm<'_, F> {
    /// The knowledge argument is ignored; the bound high-frequency input is
    /// used instead.
    fn predict(&self, lt: &Tensor<F>, t: usize, _knowledge: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let mut g = Graph::new(self.store);
        let x = g.input(lt.clone());
        let h = self.high.map(|h| g.input(h.clone()));
        let out = self.model.forward(&mut g, x, t, h)?;
        Ok(g.value(out.eps).clone())
    }
}

/// Loss and parameter gradients of one item at a fixed `(t, eps)`.
pub fn item_loss<F: Real>(model: &Kcdm, store: &ParamStore<F>, item: &TrainItem<F>, t: usize, eps: &Tensor<F>, schedule: &NoiseSchedule) -> Result<(f64, Grads<F>)> {
    let lt = q_sample_with_noise(&item.l0, t, eps, schedule)?;
    let mut g = Graph::new(store);
    let x = g.input(lt);
    let h = item.high.as_ref().map(|h| g.input(h.clone()));
    let out = model.forward(&mut g, x, t, h)?;
    let target = g.input(eps.clone());
    let loss = g.mse(out.eps, target)?;
    let value = g.value(loss).re[0].as_f64();
    Ok((value, g.backward(loss)?.into_params()))
}

/// The `(t, eps)` drawn for item `index` of iteration `iteration`.
pub fn draw_noise<F: Real>(rng: &RngStream, iteration: u64, index: usize, dims: &[usize], steps: usize) -> (usize, Tensor<F>) {
    let mut r = rng.derive(&[iteration, index as u64]);
    let t = 1 + r.below(steps);
    (t, complex_noise(dims, &mut r))
}

/// One Adam step on the batch-mean noise-prediction loss; returns that loss.
///
/// Each item draws its own uniform `t` and noise from `rng` keyed by
/// `(iteration, index)`; gradients are summed in item order.
pub fn diffusion_train_step<F: Real>(
    model: &Kcdm,
    store: &mut ParamStore<F>,
    adam: &mut Adam<F>,
    batch: &[TrainItem<F>],
    schedule: &NoiseSchedule,
    rng: &RngStream,
    iteration: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let frozen: &ParamStore<F> = store;
    let parts: Vec<(f64, Grads<F>)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let (t, eps) = draw_noise(rng, iteration, i, item.l0.dims(), schedule.steps);
            item_loss(model, frozen, item, t, &eps, schedule)
        })
        .collect::<Result<_>>()?;
    let loss = parts.iter().map(|p| p.0).sum::<f64>() / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite diffusion loss at iteration {iteration}")));
    }
    let grads: Vec<Grads<F>> = parts.into_iter().map(|p| p.1).collect();
    let mut total = Grads::sum_ordered(store.len(), &grads);
    total.scale(F::of(1.0 / batch.len() as f64));
    adam.update(store, &total)?;
    Ok(loss)
}
