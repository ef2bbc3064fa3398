//! The pipeline stages as in-memory functions. The command line wraps each
//! one with artifact I/O; the ablation harness and tests chain them directly.

use std::time::Instant;

use anyhow::{ensure, Context, Result};

use kcdm_core::contourlet::{ContourletPyramid, PaddedContourlet};
use kcdm_core::numerics::{ComplexImage, RngStream};
use kcdm_core::polsar::{default_layout, synth_scene, to_channels, CoherencyField, LabelMap};
use kcdm_core::Complex;
use kcdm_model::cafe::{Cafe, CafeConfig};
use kcdm_model::classifier::{
    evaluate, fuse_features, pixel_rows, select_rows, stratified_split, train_head, EpochLog, FeatureReducer, Fusion, HeadConfig,
    HeadTrainConfig, Metrics, PatchHead, RealGrid, Split, WishartMl,
};
use kcdm_model::diffusion::{make_schedule, NoiseSchedule};
use kcdm_model::features::{cafe_features, extract_features, WindowGrid};
use kcdm_model::kcdm::Kcdm;
use kcdm_model::skem::{Skem, SkemConfig};
use kcdm_model::train::{train_cafe_probe, train_diffusion, CafeProbe, DiffusionData, DiffusionTrainConfig, ProbeTrainConfig};
use kcdm_model::unet::{UNet, UNetConfig};
use kcdm_nn::{Adam, Checkpoint, ParamStore, Tensor};

use crate::config::{FusionMode, PipelineConfig};

const SCENE_STREAM: u64 = 10;
const SPLIT_STREAM: u64 = 11;
const DIFFUSION_INIT_STREAM: u64 = 12;
const DIFFUSION_TRAIN_STREAM: u64 = 13;
const FEATURE_STREAM: u64 = 14;
const CAFE_INIT_STREAM: u64 = 15;
const CAFE_TRAIN_STREAM: u64 = 16;
const HEAD_STREAM: u64 = 17;

/// A synthetic scene exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub field: CoherencyField,
    pub labels: LabelMap,
}

pub fn synth(cfg: &PipelineConfig) -> Result<Scene> {
    let s = &cfg.scene;
    let labels = default_layout(s.height, s.width, s.classes)?;
    let sigmas = cfg.class_sigmas()?;
    let field = synth_scene(&labels, &sigmas, s.looks, &RngStream::substream(cfg.seed, SCENE_STREAM))?;
    Ok(Scene { field: field.quantized(), labels })
}

/// Coherency channels, each shifted to zero mean and scaled to unit mean
/// squared modulus over the scene.
pub fn normalized_channels(field: &CoherencyField) -> ComplexImage<f64> {
    let mut img = to_channels(field);
    for c in 0..img.channels() {
        let mut plane = img.plane(c);
        let n = plane.len() as f64;
        let mean = plane.iter().fold(Complex::new(0.0, 0.0), |a, z| a + z) / n;
        let var = plane.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for z in plane.iter_mut() {
            *z = (*z - mean) * scale;
        }
        img.set_plane(c, &plane);
    }
    img
}

/// Contourlet pyramid of the normalised channels, at the stored precision.
pub fn decompose(cfg: &PipelineConfig, field: &CoherencyField) -> Result<ContourletPyramid<f32>> {
    let c = &cfg.contourlet;
    let bank = PaddedContourlet::new(c.levels, c.direction_exponent, field.height, field.width, c.margin)?;
    Ok(bank.decompose(&normalized_channels(field))?.cast())
}

/// Denoiser inputs: the lowpass (or, without the decomposition, the
/// normalised channels) and the stacked finest-level subbands for guidance.
pub fn diffusion_data(cfg: &PipelineConfig, field: &CoherencyField, pyramid: Option<&ContourletPyramid<f32>>) -> Result<DiffusionData<f32>> {
    if !cfg.contourlet.enabled {
        return Ok(DiffusionData {
            low: Tensor::from_image(&normalized_channels(field).cast()),
            high: None,
        });
    }
    let p = pyramid.context("the decomposition is enabled but no pyramid was given")?;
    let high = if cfg.training.guided {
        Some(Tensor::from_image(&p.stacked_level(0)?))
    } else {
        None
    };
    Ok(DiffusionData {
        low: Tensor::from_image(&p.low),
        high,
    })
}

pub fn schedule(cfg: &PipelineConfig) -> Result<NoiseSchedule> {
    Ok(make_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end)?)
}

/// Builds the denoiser with its seeded initial weights.
pub fn build_denoiser(cfg: &PipelineConfig, store: &mut ParamStore<f32>, data: &DiffusionData<f32>) -> Result<Kcdm> {
    let t = &cfg.training;
    let mut rng = RngStream::substream(cfg.seed, DIFFUSION_INIT_STREAM);
    let k = if t.guided { t.knowledge_channels } else { 0 };
    let ucfg = UNetConfig {
        depth: t.depth,
        base_channels: t.base_channels,
        attention_levels: (1..=t.depth).collect(),
        ..UNetConfig::new(data.low.chw().0, k)
    };
    let unet = UNet::new(store, "kcdm", ucfg, &mut rng)?;
    let skem = match &data.high {
        Some(h) if t.guided => Some(Skem::new(store, "skem", SkemConfig::new(h.chw().0, k), &mut rng)?),
        _ => None,
    };
    Ok(Kcdm { unet, skem })
}

/// A trained (or partially trained) denoiser.
pub struct Denoiser {
    pub model: Kcdm,
    pub store: ParamStore<f32>,
    /// Loss of every completed iteration.
    pub losses: Vec<f64>,
}

/// Snapshot of training state after `iteration` iterations.
pub fn training_checkpoint(store: &ParamStore<f32>, adam: &Adam<f32>, iterations: u64) -> Checkpoint {
    let mut ck = Checkpoint::from_store(store);
    ck.add_optimizer(store, adam);
    ck.meta.insert("iterations".into(), iterations as f64);
    ck
}

/// Trains the denoiser, optionally resuming from a checkpoint and its loss
/// history. `on_checkpoint` receives a snapshot every
/// `training.checkpoint_every` iterations and after the last one.
pub fn train_denoiser(
    cfg: &PipelineConfig,
    data: &DiffusionData<f32>,
    resume: Option<(&Checkpoint, Vec<f64>)>,
    mut on_checkpoint: impl FnMut(&Checkpoint, &[f64]) -> Result<()>,
) -> Result<Denoiser> {
    let t = &cfg.training;
    let mut store = ParamStore::new();
    let model = build_denoiser(cfg, &mut store, data)?;
    let mut adam = Adam::new(&store, t.lr);
    let mut losses = Vec::new();
    let mut start = 0;
    if let Some((ck, history)) = resume {
        ck.restore_store(&mut store)?;
        ck.restore_optimizer(&store, &mut adam)?;
        start = ck.meta("iterations").context("checkpoint has no iteration count")? as u64;
        ensure!(history.len() as u64 == start, "loss history has {} rows for {start} iterations", history.len());
        losses = history;
    }
    let schedule = schedule(cfg)?;
    let tcfg = DiffusionTrainConfig {
        iterations: t.iterations,
        patch: t.patch,
        batch: t.batch,
        seed: RngStream::substream(cfg.seed, DIFFUSION_TRAIN_STREAM).seed(),
    };
    let every = t.checkpoint_every;
    train_diffusion(&model, &mut store, &mut adam, data, &schedule, &tcfg, start, |it, loss, store, adam| {
        losses.push(loss);
        let done = it + 1;
        if done % 50 == 0 {
            log::info!("diffusion iteration {done}: loss {loss:.4}");
        }
        if done == t.iterations || (every > 0 && done % every == 0) {
            on_checkpoint(&training_checkpoint(store, adam, done), &losses).map_err(|e| kcdm_core::Error::InvalidArgument(format!("{e:#}")))?;
        }
        Ok(())
    })
    .map_err(|e| anyhow::anyhow!("diffusion training failed: {e}"))?;
    if start == t.iterations {
        on_checkpoint(&training_checkpoint(&store, &adam, start), &losses)?;
    }
    Ok(Denoiser { model, store, losses })
}

/// Rebuilds a trained denoiser from its checkpoint.
pub fn load_denoiser(cfg: &PipelineConfig, data: &DiffusionData<f32>, ck: &Checkpoint) -> Result<Denoiser> {
    let mut store = ParamStore::new();
    let model = build_denoiser(cfg, &mut store, data)?;
    ck.restore_store(&mut store)?;
    Ok(Denoiser { model, store, losses: Vec::new() })
}

pub fn split(cfg: &PipelineConfig, labels: &LabelMap) -> Result<Split> {
    let mut rng = RngStream::substream(cfg.seed, SPLIT_STREAM);
    Ok(stratified_split(labels, cfg.classifier.train_frac, cfg.classifier.val_frac, &mut rng)?)
}

/// Low-frequency features of the whole scene at `layer`.
pub fn low_features(cfg: &PipelineConfig, den: &Denoiser, data: &DiffusionData<f32>, layer: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = data.low.chw();
    let grid = WindowGrid::new(h, w, cfg.feature.window)?;
    let seed = RngStream::substream(cfg.seed, FEATURE_STREAM).seed();
    Ok(extract_features(
        &den.model,
        &den.store,
        &data.low,
        data.high.as_ref(),
        &schedule(cfg)?,
        cfg.feature.t_feat,
        layer,
        &grid,
        seed,
    )?)
}

/// The enhancement module with its trained weights.
pub struct Enhancer {
    pub cafe: Cafe,
    pub store: ParamStore<f32>,
    pub losses: Vec<f64>,
}

fn high_tensors(pyramid: &ContourletPyramid<f32>) -> Vec<Vec<Tensor<f32>>> {
    pyramid.high.iter().map(|l| l.iter().map(Tensor::from_image).collect()).collect()
}

fn build_enhancer(cfg: &PipelineConfig, pyramid: &ContourletPyramid<f32>, store: &mut ParamStore<f32>) -> Result<(Cafe, CafeProbe)> {
    let mut rng = RngStream::substream(cfg.seed, CAFE_INIT_STREAM);
    let ccfg = CafeConfig {
        out_channels: cfg.cafe.out_channels,
        ..CafeConfig::new(pyramid.levels(), pyramid.shape().2)
    };
    let cafe = Cafe::new(store, "cafe", ccfg, &mut rng)?;
    let probe = CafeProbe::new(store, "probe", cfg.cafe.out_channels, cfg.scene.classes, &mut rng)?;
    Ok((cafe, probe))
}

/// Trains the enhancement module through its probe on the training pixels.
pub fn train_enhancer(cfg: &PipelineConfig, pyramid: &ContourletPyramid<f32>, labels: &LabelMap, split: &Split) -> Result<Enhancer> {
    let mut store = ParamStore::new();
    let (cafe, probe) = build_enhancer(cfg, pyramid, &mut store)?;
    let mut adam = Adam::new(&store, cfg.cafe.lr);
    let pcfg = ProbeTrainConfig {
        iterations: cfg.cafe.iterations,
        batch: cfg.cafe.batch,
        patch: cfg.feature.window,
        seed: RngStream::substream(cfg.seed, CAFE_TRAIN_STREAM).seed(),
    };
    let losses = train_cafe_probe(&cafe, &probe, &mut store, &mut adam, &high_tensors(pyramid), labels, &split.train, &pcfg)?;
    Ok(Enhancer { cafe, store, losses })
}

pub fn load_enhancer(cfg: &PipelineConfig, pyramid: &ContourletPyramid<f32>, ck: &Checkpoint) -> Result<Enhancer> {
    let mut store = ParamStore::new();
    let (cafe, _) = build_enhancer(cfg, pyramid, &mut store)?;
    ck.restore_store(&mut store)?;
    Ok(Enhancer { cafe, store, losses: Vec::new() })
}

pub fn high_features(cfg: &PipelineConfig, enh: &Enhancer, pyramid: &ContourletPyramid<f32>) -> Result<Tensor<f32>> {
    let (h, w, _) = pyramid.shape();
    let grid = WindowGrid::new(h, w, cfg.feature.window)?;
    Ok(cafe_features(&enh.cafe, &enh.store, &high_tensors(pyramid), &grid)?)
}

/// PCA reducer plus patch head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub reducer: FeatureReducer,
    pub head: PatchHead<f32>,
    pub log: Vec<EpochLog>,
}

fn fusion(cfg: &PipelineConfig) -> Fusion {
    match cfg.classifier.fusion {
        FusionMode::Concat => Fusion::Concat,
        FusionMode::Add => Fusion::Add,
    }
}

/// Fused features as `(rows, dim)` plus the scene size.
fn feature_rows(cfg: &PipelineConfig, f1: Option<&Tensor<f32>>, f2: Option<&Tensor<f32>>) -> Result<(Vec<f64>, usize, usize, usize)> {
    let fused = fuse_features(f1, f2, fusion(cfg))?;
    let (_, h, w) = fused.chw();
    let (rows, dim) = pixel_rows(&fused);
    Ok((rows, dim, h, w))
}

pub fn reduced_grid(cfg: &PipelineConfig, reducer: &FeatureReducer, f1: Option<&Tensor<f32>>, f2: Option<&Tensor<f32>>) -> Result<RealGrid<f32>> {
    let (rows, _, h, w) = feature_rows(cfg, f1, f2)?;
    Ok(reducer.transform(&rows, h, w)?)
}

/// Fits PCA on the training pixels only, then trains the head.
pub fn fit_classifier(cfg: &PipelineConfig, f1: Option<&Tensor<f32>>, f2: Option<&Tensor<f32>>, labels: &LabelMap, split: &Split) -> Result<Classifier> {
    let (rows, dim, h, w) = feature_rows(cfg, f1, f2)?;
    let reducer = FeatureReducer::fit(&select_rows(&rows, dim, &split.train), dim, cfg.classifier.kept_dims)?;
    log::info!(
        "PCA keeps {} of {dim} dimensions, explained variance {:.4}",
        reducer.kept_dims(),
        reducer.explained_variance_ratio()
    );
    let grid = reducer.transform(&rows, h, w)?;
    let mut rng = RngStream::substream(cfg.seed, HEAD_STREAM);
    let mut head = PatchHead::new(HeadConfig::new(reducer.kept_dims(), cfg.scene.classes), &mut rng)?;
    let k = &cfg.classifier;
    let tcfg = HeadTrainConfig {
        epochs: k.epochs,
        batch: k.batch,
        lr: k.lr,
    };
    let log = train_head(&mut head, &grid, labels, &split.train, &split.val, &tcfg, &mut rng)?;
    Ok(Classifier { reducer, head, log })
}

pub fn predict(cfg: &PipelineConfig, clf: &Classifier, f1: Option<&Tensor<f32>>, f2: Option<&Tensor<f32>>) -> Result<LabelMap> {
    Ok(clf.head.predict_map(&reduced_grid(cfg, &clf.reducer, f1, f2)?)?)
}

/// Accuracy of the prediction and of the Wishart baseline on the test pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metrics: Metrics,
    pub baseline: Metrics,
}

pub fn report(scene: &Scene, prediction: &LabelMap, split: &Split) -> Result<Report> {
    let metrics = evaluate(prediction, &scene.labels, Some(&split.test))?;
    let ml = WishartMl::fit(&scene.field, &scene.labels, &split.train)?;
    let baseline = evaluate(&ml.predict_map(&scene.field)?, &scene.labels, Some(&split.test))?;
    Ok(Report { metrics, baseline })
}

/// Everything produced by one in-memory run.
pub struct RunOutcome {
    pub layer: usize,
    pub report: Report,
    pub prediction: LabelMap,
    pub diffusion_losses: Vec<f64>,
    pub classifier_log: Vec<EpochLog>,
    pub explained_variance: f64,
    pub timings: Vec<(String, f64)>,
}

/// Runs every stage in memory at the configured feature layer.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunOutcome> {
    Ok(run_layers(cfg, &[cfg.feature.layer])?.remove(0))
}

/// Runs every stage in memory, training the networks once and repeating
/// feature extraction and classification for each layer.
pub fn run_layers(cfg: &PipelineConfig, layers: &[usize]) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    ensure!(!layers.is_empty(), "no layers requested");
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let scene = synth(cfg)?;
    lap("synth", &mut timings);
    let pyramid = if cfg.contourlet.enabled { Some(decompose(cfg, &scene.field)?) } else { None };
    lap("decompose", &mut timings);
    let split = split(cfg, &scene.labels)?;
    let low = if cfg.feature.use_low {
        let data = diffusion_data(cfg, &scene.field, pyramid.as_ref())?;
        let den = train_denoiser(cfg, &data, None, |_, _| Ok(()))?;
        lap("train-diffusion", &mut timings);
        Some((data, den))
    } else {
        None
    };
    let f2 = match (&pyramid, cfg.uses_cafe()) {
        (Some(p), true) => {
            let enh = train_enhancer(cfg, p, &scene.labels, &split)?;
            Some(high_features(cfg, &enh, p)?)
        }
        _ => None,
    };
    lap("extract-high", &mut timings);
    let mut out = Vec::with_capacity(layers.len());
    for &layer in layers {
        ensure!((1..=cfg.training.depth).contains(&layer), "layer {layer} outside 1..={}", cfg.training.depth);
        let mut t = timings.clone();
        let f1 = low.as_ref().map(|(data, den)| low_features(cfg, den, data, layer)).transpose()?;
        lap("extract-low", &mut t);
        let clf = fit_classifier(cfg, f1.as_ref(), f2.as_ref(), &scene.labels, &split)?;
        lap("train-classifier", &mut t);
        let prediction = predict(cfg, &clf, f1.as_ref(), f2.as_ref())?;
        let report = report(&scene, &prediction, &split)?;
        lap("evaluate", &mut t);
        out.push(RunOutcome {
            layer,
            report,
            prediction,
            diffusion_losses: low.as_ref().map(|(_, d)| d.losses.clone()).unwrap_or_default(),
            explained_variance: clf.reducer.explained_variance_ratio(),
            classifier_log: clf.log,
            timings: t,
        });
    }
    Ok(out)
}
