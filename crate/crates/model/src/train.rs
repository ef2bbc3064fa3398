//! Training loops: the denoiser on random scene crops, and the enhancement
//! module through a per-pixel classification probe.

use rayon::prelude::*;

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::polsar::{LabelMap, UNLABELED};
use kcdm_core::{Error, Result};
use kcdm_nn::{Adam, ComplexConv, Grads, Graph, ParamStore, Tensor, Var, IGNORE_LABEL};

use crate::cafe::Cafe;
use crate::diffusion::NoiseSchedule;
use crate::features::reflect_pad;
use crate::kcdm::{diffusion_train_step, Kcdm, TrainItem};

const CROP_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const PROBE_STREAM: u64 = 3;

/// Scene-sized denoiser inputs: the clean low-frequency image and, for
/// guided models, the stacked high-frequency subbands.
#[derive(Debug, Clone)]
pub struct DiffusionData<F> {
    pub low: Tensor<F>,
    pub high: Option<Tensor<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionTrainConfig {
    pub iterations: u64,
    pub patch: usize,
    pub batch: usize,
    pub seed: u64,
}

/// The crops of iteration `iteration`; a pure function of `(seed, iteration)`.
pub fn crop_batch<F: Real>(data: &DiffusionData<F>, patch: usize, batch: usize, seed: u64, iteration: u64) -> Result<Vec<TrainItem<F>>> {
    let (_, h, w) = data.low.chw();
    if patch == 0 || patch > h || patch > w {
        return Err(Error::InvalidArgument(format!("patch {patch} does not fit a {h}x{w} scene")));
    }
    let mut rng = RngStream::substream(seed, CROP_STREAM).derive(&[iteration]);
    (0..batch)
        .map(|_| {
            let y0 = rng.below(h - patch + 1);
            let x0 = rng.below(w - patch + 1);
            Ok(TrainItem {
                l0: data.low.window(y0, x0, patch, patch)?,
                high: data.high.as_ref().map(|t| t.window(y0, x0, patch, patch)).transpose()?,
            })
        })
        .collect()
}

/// Runs iterations `start..cfg.iterations`, calling `on_step(iteration,
/// loss)` after each. Crops and noise depend only on the seed and the
/// iteration, so resuming from a checkpoint taken after iteration `k` with
/// `start = k + 1` reproduces an uninterrupted run.
#[allow(clippy::too_many_arguments)]
pub fn train_diffusion<F: Real>(
    model: &Kcdm,
    store: &mut ParamStore<F>,
    adam: &mut Adam<F>,
    data: &DiffusionData<F>,
    schedule: &NoiseSchedule,
    cfg: &DiffusionTrainConfig,
    start: u64,
    mut on_step: impl FnMut(u64, f64, &ParamStore<F>, &Adam<F>) -> Result<()>,
) -> Result<()> {
    if model.skem.is_some() != data.high.is_some() {
        return Err(Error::InvalidArgument("high-frequency data must be given exactly for guided models".into()));
    }
    let noise = RngStream::substream(cfg.seed, NOISE_STREAM);
    for it in start..cfg.iterations {
        let batch = crop_batch(data, cfg.patch, cfg.batch, cfg.seed, it)?;
        let loss = diffusion_train_step(model, store, adam, &batch, schedule, &noise, it)?;
        on_step(it, loss, store, adam)?;
    }
    Ok(())
}

/// 1×1 map from enhancement features to class logits, used only to give the
/// enhancement module a training signal.
#[derive(Debug, Clone)]
pub struct CafeProbe {
    pub conv: ComplexConv,
}

impl CafeProbe {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, channels: usize, classes: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(CafeProbe {
            conv: ComplexConv::square(store, name, channels, classes, 1, rng)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeTrainConfig {
    pub iterations: u64,
    pub batch: usize,
    pub patch: usize,
    pub seed: u64,
}

/// Trains the enhancement module and probe with cross-entropy on windows
/// centred on training pixels; every training pixel inside a window is
/// supervised. Returns the loss per iteration.
#[allow(clippy::too_many_arguments)]
pub fn train_cafe_probe<F: Real>(
    cafe: &Cafe,
    probe: &CafeProbe,
    store: &mut ParamStore<F>,
    adam: &mut Adam<F>,
    high: &[Vec<Tensor<F>>],
    labels: &LabelMap,
    train: &[usize],
    cfg: &ProbeTrainConfig,
) -> Result<Vec<f64>> {
    if train.is_empty() || cfg.batch == 0 || cfg.patch == 0 {
        return Err(Error::InvalidArgument("probe training needs pixels, a batch and a patch size".into()));
    }
    let (before, after) = (cfg.patch / 2, cfg.patch - cfg.patch / 2 - 1);
    let padded: Vec<Vec<Tensor<F>>> = high
        .iter()
        .map(|lvl| lvl.iter().map(|t| reflect_pad(t, before, before, after, after)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let (h, w) = (labels.height, labels.width);
    let (ph, pw) = (h + cfg.patch - 1, w + cfg.patch - 1);
    let mut mask = vec![IGNORE_LABEL; ph * pw];
    for &p in train {
        let l = labels.labels[p];
        if l == UNLABELED {
            return Err(Error::InvalidArgument(format!("training pixel {p} is unlabelled")));
        }
        mask[(p / w + before) * pw + p % w + before] = l;
    }
    let rng = RngStream::substream(cfg.seed, PROBE_STREAM);
    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    for it in 0..cfg.iterations {
        let mut r = rng.derive(&[it]);
        let centres: Vec<usize> = (0..cfg.batch).map(|_| train[r.below(train.len())]).collect();
        let frozen: &ParamStore<F> = store;
        let parts: Vec<(f64, Grads<F>)> = centres
            .par_iter()
            .map(|&p| {
                let (y0, x0) = (p / w, p % w);
                let mut g = Graph::new(frozen);
                let vars: Vec<Vec<Var>> = padded
                    .iter()
                    .map(|lvl| lvl.iter().map(|t| Ok(g.input(t.window(y0, x0, cfg.patch, cfg.patch)?))).collect::<Result<_>>())
                    .collect::<Result<_>>()?;
                let f = cafe.forward(&mut g, &vars)?;
                let logits = probe.conv.forward(&mut g, f)?;
                let window: Vec<u8> = (0..cfg.patch)
                    .flat_map(|dy| mask[(y0 + dy) * pw + x0..(y0 + dy) * pw + x0 + cfg.patch].iter().copied())
                    .collect();
                let loss = g.softmax_ce(logits, &window)?;
                let value = g.value(loss).re[0].as_f64();
                Ok((value, g.backward(loss)?.into_params()))
            })
            .collect::<Result<_>>()?;
        let loss = parts.iter().map(|p| p.0).sum::<f64>() / parts.len() as f64;
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite probe loss at iteration {it}")));
        }
        let grads: Vec<Grads<F>> = parts.into_iter().map(|p| p.1).collect();
        let mut total = Grads::sum_ordered(store.len(), &grads);
        total.scale(F::of(1.0 / cfg.batch as f64));
        adam.update(store, &total)?;
        losses.push(loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cafe::CafeConfig;
    use crate::diffusion::{complex_noise, make_schedule};
    use crate::unet::{UNet, UNetConfig};

    fn tiny(store: &mut ParamStore<f32>, rng: &mut RngStream) -> Kcdm {
        let cfg = UNetConfig {
            base_channels: 4,
            norm_groups: 2,
            attn_dim: 2,
            depth: 2,
            attention_levels: vec![1, 2],
            ..UNetConfig::new(2, 0)
        };
        Kcdm { unet: UNet::new(store, "kcdm", cfg, rng).unwrap(), skem: None }
    }

    #[test]
    fn crops_are_reproducible_and_in_bounds() {
        let mut rng = RngStream::new(0);
        let data = DiffusionData::<f64> { low: complex_noise(&[2, 20, 24], &mut rng), high: None };
        let a = crop_batch(&data, 8, 5, 7, 3).unwrap();
        let b = crop_batch(&data, 8, 5, 7, 3).unwrap();
        let c = crop_batch(&data, 8, 5, 7, 4).unwrap();
        assert_eq!(a.iter().map(|i| &i.l0).collect::<Vec<_>>(), b.iter().map(|i| &i.l0).collect::<Vec<_>>());
        assert_ne!(a[0].l0, c[0].l0);
        assert!(crop_batch(&data, 21, 1, 0, 0).is_err());
    }

    #[test]
    fn resumed_training_matches_an_uninterrupted_run() {
        let schedule = make_schedule(4, 1e-3, 0.2).unwrap();
        let mut rng = RngStream::new(1);
        let data = DiffusionData::<f32> { low: complex_noise(&[2, 16, 16], &mut rng), high: None };
        let cfg = DiffusionTrainConfig { iterations: 4, patch: 8, batch: 2, seed: 5 };

        let mut store = ParamStore::new();
        let model = tiny(&mut store, &mut RngStream::new(2));
        let init = store.clone();
        let mut adam = Adam::new(&store, 1e-3);
        let mut full = Vec::new();
        train_diffusion(&model, &mut store, &mut adam, &data, &schedule, &cfg, 0, |_, l, _, _| {
            full.push(l);
            Ok(())
        })
        .unwrap();

        let mut store2 = init;
        let mut adam2 = Adam::new(&store2, 1e-3);
        let mut first = Vec::new();
        let half = DiffusionTrainConfig { iterations: 2, ..cfg };
        train_diffusion(&model, &mut store2, &mut adam2, &data, &schedule, &half, 0, |_, l, _, _| {
            first.push(l);
            Ok(())
        })
        .unwrap();
        train_diffusion(&model, &mut store2, &mut adam2, &data, &schedule, &cfg, 2, |_, l, _, _| {
            first.push(l);
            Ok(())
        })
        .unwrap();
        assert_eq!(full, first);
        assert_eq!(store, store2);
    }

    #[test]
    fn probe_training_lowers_the_loss_on_separable_subbands() {
        let mut rng = RngStream::new(3);
        let labels = LabelMap::vertical_split(16, 16);
        let mut bands = Vec::new();
        for _ in 0..8 {
            let mut t = complex_noise::<f32>(&[1, 16, 16], &mut rng);
            for (i, v) in t.re.iter_mut().enumerate() {
                *v = 0.1 * *v + if labels.labels[i] == 0 { 1.0 } else { -1.0 };
            }
            bands.push(t);
        }
        let mut store = ParamStore::new();
        let cafe = Cafe::new(&mut store, "cafe", CafeConfig { embed: 2, attn_dim: 2, out_channels: 4, ..CafeConfig::new(1, 1) }, &mut rng).unwrap();
        let probe = CafeProbe::new(&mut store, "probe", 4, 2, &mut rng).unwrap();
        let mut adam = Adam::new(&store, 1e-2);
        let train: Vec<usize> = (0..256).step_by(7).collect();
        let cfg = ProbeTrainConfig { iterations: 30, batch: 4, patch: 8, seed: 0 };
        let losses = train_cafe_probe(&cafe, &probe, &mut store, &mut adam, &[bands], &labels, &train, &cfg).unwrap();
        let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = losses[25..].iter().sum::<f64>() / 5.0;
        assert!(tail < 0.5 * head, "{losses:?}");
    }
}
