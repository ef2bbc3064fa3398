//! Command-line interface: one subcommand per pipeline stage, each reading
//! and writing artifacts in the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use kcdm_core::contourlet::{load_pyramid, reconstruct, save_pyramid};
use kcdm_core::polsar::{load_dataset, save_dataset};
use kcdm_nn::Checkpoint;

use crate::ablate::{run_ablation, table, Sweep};
use crate::artifacts::*;
use crate::config::PipelineConfig;
use crate::render::{legend, png_bytes};
use crate::stages::{self, Scene};

pub const OUT_ENV: &str = "CD_KCDM_OUT";
pub const DEFAULT_OUT: &str = "cd-kcdm-out";

#[derive(Debug, Parser)]
#[command(name = "cd-kcdm", version, about = "Knowledge-guided complex diffusion features for PolSAR classification")]
pub struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; defaults to $CD_KCDM_OUT, then ./cd-kcdm-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise the Wishart scene and its truth map.
    Synth {
        /// Overrides the number of classes; needs that many covariances.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Decompose the normalised channels into contourlet subbands.
    Decompose {
        /// Also sum the subbands back and report the reconstruction error.
        #[arg(long)]
        reconstruct_check: bool,
    },
    /// Train the (optionally guided) denoiser.
    TrainDiffusion {
        /// Continue from the last checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Extract low- and high-frequency feature maps.
    Extract {
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Fit PCA and the patch classifier, and predict the full map.
    TrainClassifier {
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Score a prediction against the truth on the test pixels.
    Evaluate {
        /// Label map to score instead of the classifier's prediction.
        #[arg(long)]
        prediction: Option<PathBuf>,
    },
    /// Render the prediction and truth maps as PNG with a JSON legend.
    Render {
        #[arg(long)]
        prediction: Option<PathBuf>,
    },
    /// Run the module, decomposition-level and layer ablations.
    Ablate {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
        /// Any of module, levels, layer.
        #[arg(long, value_delimiter = ',', default_values_t = vec!["module".to_string(), "levels".to_string(), "layer".to_string()])]
        sweeps: Vec<String>,
    },
}

pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

struct Ctx {
    cfg: PipelineConfig,
    dir: PathBuf,
    toml: String,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn scene(&self) -> Result<Scene> {
        let (field, labels) = load_dataset(self.path(SCENE_FILE)).with_context(|| format!("loading {SCENE_FILE}; run `synth` first"))?;
        Ok(Scene { field, labels })
    }

    fn pyramid(&self) -> Result<Option<kcdm_core::contourlet::ContourletPyramid<f32>>> {
        if !self.cfg.contourlet.enabled {
            return Ok(None);
        }
        Ok(Some(load_pyramid(self.path(PYRAMID_FILE)).with_context(|| format!("loading {PYRAMID_FILE}; run `decompose` first"))?))
    }

    fn split(&self) -> Result<kcdm_model::classifier::Split> {
        let text = std::fs::read_to_string(self.path(SPLIT_FILE)).with_context(|| format!("loading {SPLIT_FILE}; run `extract` first"))?;
        parse_split(&text)
    }

    fn echo_config(&self) -> Result<()> {
        write(&self.path(CONFIG_ECHO), &self.toml)
    }

    fn record(&self, stage: &str, inputs: &[&str], outputs: &[&str], start: Instant, details: serde_json::Value) -> Result<()> {
        let mut m = Manifest::open(&self.dir)?;
        let mut outs = outputs.to_vec();
        outs.push(CONFIG_ECHO);
        m.record(&self.dir, stage, &self.toml, inputs, &outs, start.elapsed().as_secs_f64(), details)
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Synth { classes: Some(c) } => cfg.scene.classes = *c,
        Command::Extract { layer: Some(l) } | Command::TrainClassifier { layer: Some(l) } => cfg.feature.layer = *l,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        ensure!(j >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("configuring worker threads")?;
    }
    let cfg = resolve_config(&cli)?;
    let dir = output_dir(cli.out.as_deref());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ctx = Ctx {
        toml: cfg.to_toml(),
        cfg,
        dir,
    };
    ctx.echo_config()?;
    match cli.command {
        Command::Synth { .. } => synth(&ctx),
        Command::Decompose { reconstruct_check } => decompose(&ctx, reconstruct_check),
        Command::TrainDiffusion { resume } => {
            let r = train_diffusion(&ctx, resume);
            if let Err(e) = &r {
                Manifest::open(&ctx.dir)?.record_failure("train-diffusion", &format!("{e:#}"))?;
            }
            r
        }
        Command::Extract { .. } => extract(&ctx),
        Command::TrainClassifier { .. } => train_classifier(&ctx),
        Command::Evaluate { prediction } => evaluate(&ctx, prediction.as_deref()),
        Command::Render { prediction } => render(&ctx, prediction.as_deref()),
        Command::Ablate { seeds, sweeps } => ablate(&ctx, &seeds, &sweeps),
    }
}

fn synth(ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let scene = stages::synth(&ctx.cfg)?;
    save_dataset(&scene.field, &scene.labels, ctx.path(SCENE_FILE))?;
    let s = &ctx.cfg.scene;
    println!("wrote {}x{} scene with {} classes, {} looks", s.height, s.width, s.classes, s.looks);
    ctx.record("synth", &[], &[SCENE_FILE], start, json!({}))
}

fn decompose(ctx: &Ctx, reconstruct_check: bool) -> Result<()> {
    let start = Instant::now();
    if !ctx.cfg.contourlet.enabled {
        bail!("the decomposition is disabled (contourlet.enabled = false)");
    }
    let scene = ctx.scene()?;
    let pyramid = stages::decompose(&ctx.cfg, &scene.field)?;
    save_pyramid(&pyramid, ctx.path(PYRAMID_FILE))?;
    println!("wrote {} subbands (1 lowpass + {} directional)", 1 + pyramid.levels() * pyramid.directions(), pyramid.levels() * pyramid.directions());
    let mut details = json!({ "subbands": 1 + pyramid.levels() * pyramid.directions() });
    if reconstruct_check {
        let rec = reconstruct(&pyramid)?;
        let input = stages::normalized_channels(&scene.field).cast::<f32>();
        let err = rec.max_abs_diff(&input);
        let ok = err <= 1e-6 * input.data().iter().map(|z| z.norm() as f64).fold(1.0, f64::max);
        println!("reconstruction max abs error {err:e} ({})", if ok { "ok" } else { "FAILED" });
        details["reconstruction_max_abs_error"] = json!(err);
        details["reconstruction_ok"] = json!(ok);
        ctx.record("decompose", &[SCENE_FILE], &[PYRAMID_FILE], start, details)?;
        ensure!(ok, "reconstruction error {err:e} above tolerance");
        return Ok(());
    }
    ctx.record("decompose", &[SCENE_FILE], &[PYRAMID_FILE], start, details)
}

fn train_diffusion(ctx: &Ctx, resume: bool) -> Result<()> {
    let start = Instant::now();
    let cfg = &ctx.cfg;
    ensure!(cfg.uses_diffusion(), "this configuration does not use the denoiser (feature.use_low = false)");
    let scene = ctx.scene()?;
    let pyramid = ctx.pyramid()?;
    let data = stages::diffusion_data(cfg, &scene.field, pyramid.as_ref())?;
    let resume_state = if resume {
        let ck = Checkpoint::load(ctx.path(DIFFUSION_CKPT)).context("loading the checkpoint to resume from")?;
        let history = parse_loss_csv(&std::fs::read_to_string(ctx.path(DIFFUSION_LOSS))?)?;
        let done = ck.meta("iterations").context("checkpoint has no iteration count")? as usize;
        ensure!(history.len() >= done, "loss log is shorter than the checkpoint");
        Some((ck, history[..done].to_vec()))
    } else {
        None
    };
    let den = stages::train_denoiser(cfg, &data, resume_state.as_ref().map(|(c, h)| (c, h.clone())), |ck, losses| {
        ck.save(ctx.path(DIFFUSION_CKPT))?;
        write(&ctx.path(DIFFUSION_LOSS), loss_csv(losses))
    })?;
    let (first, last) = (den.losses.first().copied(), den.losses.last().copied());
    println!("trained {} iterations; loss {:?} -> {:?}", den.losses.len(), first, last);
    let mut inputs = vec![SCENE_FILE];
    if pyramid.is_some() {
        inputs.push(PYRAMID_FILE);
    }
    ctx.record(
        "train-diffusion",
        &inputs,
        &[DIFFUSION_CKPT, DIFFUSION_LOSS],
        start,
        json!({ "iterations": den.losses.len(), "first_loss": first, "final_loss": last, "resumed": resume }),
    )
}

fn extract(ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let scene = ctx.scene()?;
    let pyramid = ctx.pyramid()?;
    let split = stages::split(cfg, &scene.labels)?;
    write(&ctx.path(SPLIT_FILE), split_json(&split))?;
    let mut inputs = vec![SCENE_FILE];
    let mut outputs = vec![SPLIT_FILE];
    if pyramid.is_some() {
        inputs.push(PYRAMID_FILE);
    }
    let f1 = if cfg.uses_diffusion() {
        let data = stages::diffusion_data(cfg, &scene.field, pyramid.as_ref())?;
        let ck = Checkpoint::load(ctx.path(DIFFUSION_CKPT)).with_context(|| format!("loading {DIFFUSION_CKPT}; run `train-diffusion` first"))?;
        inputs.push(DIFFUSION_CKPT);
        let den = stages::load_denoiser(cfg, &data, &ck)?;
        Some(stages::low_features(cfg, &den, &data, cfg.feature.layer)?)
    } else {
        None
    };
    let f2 = match (&pyramid, cfg.uses_cafe()) {
        (Some(p), true) => {
            let enh = stages::train_enhancer(cfg, p, &scene.labels, &split)?;
            Checkpoint::from_store(&enh.store).save(ctx.path(CAFE_CKPT))?;
            write(&ctx.path(CAFE_LOSS), loss_csv(&enh.losses))?;
            outputs.extend([CAFE_CKPT, CAFE_LOSS]);
            Some(stages::high_features(cfg, &enh, p)?)
        }
        _ => None,
    };
    let name = features_file(cfg.feature.layer);
    features_checkpoint(f1.as_ref(), f2.as_ref(), cfg.feature.layer).save(ctx.path(&name))?;
    outputs.push(&name);
    let shape = |t: &Option<kcdm_nn::Tensor<f32>>| t.as_ref().map(|t| t.dims().to_vec());
    println!("wrote {name}: f1 {:?}, f2 {:?}", shape(&f1), shape(&f2));
    ctx.record("extract", &inputs, &outputs, start, json!({ "layer": cfg.feature.layer, "f1": shape(&f1), "f2": shape(&f2) }))
}

fn train_classifier(ctx: &Ctx) -> Result<()> {
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let scene = ctx.scene()?;
    let split = ctx.split()?;
    let name = features_file(cfg.feature.layer);
    let ck = Checkpoint::load(ctx.path(&name)).with_context(|| format!("loading {name}; run `extract` first"))?;
    let f1 = ck.tensor("f1").cloned();
    let f2 = ck.tensor("f2").cloned();
    let clf = stages::fit_classifier(cfg, f1.as_ref(), f2.as_ref(), &scene.labels, &split)?;
    let prediction = stages::predict(cfg, &clf, f1.as_ref(), f2.as_ref())?;
    write(&ctx.path(CLASSIFIER_FILE), classifier_json(&clf))?;
    write(&ctx.path(CLASSIFIER_LOG), classifier_log_csv(&clf.log))?;
    write(&ctx.path(PREDICTION_FILE), label_map_bytes(&prediction))?;
    let val = clf.log.last().and_then(|e| e.val_accuracy);
    println!("trained classifier; final validation accuracy {val:?}");
    ctx.record(
        "train-classifier",
        &[SCENE_FILE, SPLIT_FILE, &name],
        &[CLASSIFIER_FILE, CLASSIFIER_LOG, PREDICTION_FILE],
        start,
        json!({ "explained_variance": clf.reducer.explained_variance_ratio(), "kept_dims": clf.reducer.kept_dims(), "final_val_accuracy": val }),
    )
}

fn evaluate(ctx: &Ctx, prediction: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let scene = ctx.scene()?;
    let split = ctx.split()?;
    let pred_path = prediction.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(PREDICTION_FILE));
    let pred = load_label_map(&pred_path)?;
    let report = stages::report(&scene, &pred, &split)?;
    let m = &report.metrics;
    println!(
        "OA {:.4}  AA {:.4}  Kappa {:.4}  (Wishart ML OA {:.4})",
        m.overall_accuracy, m.average_accuracy, m.kappa, report.baseline.overall_accuracy
    );
    let v = json!({
        "prediction_sha256": sha256_file(&pred_path)?,
        "test_pixels": split.test.len(),
        "metrics": metrics_value(m),
        "baseline": metrics_value(&report.baseline),
    });
    write(&ctx.path(METRICS_FILE), serde_json::to_string_pretty(&v)?)?;
    ctx.record("evaluate", &[SCENE_FILE, SPLIT_FILE], &[METRICS_FILE], start, json!({ "overall_accuracy": m.overall_accuracy }))
}

fn render(ctx: &Ctx, prediction: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let scene = ctx.scene()?;
    let pred = load_label_map(&prediction.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(PREDICTION_FILE)))?;
    write(&ctx.path("prediction.png"), png_bytes(&pred)?)?;
    write(&ctx.path("truth.png"), png_bytes(&scene.labels)?)?;
    write(&ctx.path("legend.json"), serde_json::to_string_pretty(&legend(scene.labels.classes))?)?;
    println!("wrote prediction.png, truth.png and legend.json");
    ctx.record("render", &[SCENE_FILE], &["prediction.png", "truth.png", "legend.json"], start, json!({}))
}

fn ablate(ctx: &Ctx, seeds: &[u64], sweeps: &[String]) -> Result<()> {
    let start = Instant::now();
    let sweeps: Vec<Sweep> = sweeps
        .iter()
        .map(|s| match s.as_str() {
            "module" => Ok(Sweep::Modules),
            "levels" => Ok(Sweep::Levels),
            "layer" => Ok(Sweep::Layers),
            other => bail!("unknown sweep `{other}` (expected module, levels or layer)"),
        })
        .collect::<Result<_>>()?;
    let rows = run_ablation(&ctx.cfg, seeds, &sweeps, Some(&ctx.path("ablation")))?;
    print!("{}", table(&rows));
    ctx.record("ablate", &[], &["ablation/ablation.csv", "ablation/ablation.txt"], start, json!({ "rows": rows.len() }))
}
