//! Pipeline configuration: TOML with every field defaulted, unknown keys
//! rejected and every value validated on load.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use kcdm_core::polsar::{builtin_sigmas, validate_sigma, Mat3c, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub contourlet: ContourletConfig,
    pub schedule: ScheduleConfig,
    pub training: TrainingConfig,
    pub feature: FeatureConfig,
    pub cafe: CafeTrainConfig,
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub looks: u8,
    /// Class covariances as `[T11, T22, T33, Re T12, Im T12, Re T13, Im T13,
    /// Re T23, Im T23]`; empty means the built-in three classes.
    pub sigmas: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourletConfig {
    pub levels: usize,
    pub direction_exponent: u32,
    /// Reflect padding applied before the periodic decomposition.
    pub margin: usize,
    /// `false` feeds the normalised channel data to the denoiser directly
    /// and disables the high-frequency paths.
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub iterations: u64,
    pub patch: usize,
    pub batch: usize,
    pub guided: bool,
    pub base_channels: usize,
    pub depth: usize,
    pub knowledge_channels: usize,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub layer: usize,
    pub t_feat: usize,
    pub window: usize,
    /// Low-frequency (denoiser) features.
    pub use_low: bool,
    /// High-frequency (enhancement module) features.
    pub use_high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CafeTrainConfig {
    pub iterations: u64,
    pub lr: f64,
    pub batch: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Concat,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kept_dims: usize,
    pub fusion: FusionMode,
    pub train_frac: f64,
    pub val_frac: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            scene: SceneConfig::default(),
            contourlet: ContourletConfig::default(),
            schedule: ScheduleConfig::default(),
            training: TrainingConfig::default(),
            feature: FeatureConfig::default(),
            cafe: CafeTrainConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 128,
            width: 128,
            classes: 3,
            looks: 4,
            sigmas: Vec::new(),
        }
    }
}

impl Default for ContourletConfig {
    fn default() -> Self {
        ContourletConfig {
            levels: 3,
            direction_exponent: 3,
            margin: 16,
            enabled: true,
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 16,
            beta_start: 1e-4,
            beta_end: 0.25,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-4,
            iterations: 1000,
            patch: 16,
            batch: 8,
            guided: true,
            base_channels: 16,
            depth: 3,
            knowledge_channels: 8,
            checkpoint_every: 100,
        }
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            layer: 1,
            t_feat: 1,
            window: 16,
            use_low: true,
            use_high: true,
        }
    }
}

impl Default for CafeTrainConfig {
    fn default() -> Self {
        CafeTrainConfig {
            iterations: 100,
            lr: 1e-3,
            batch: 8,
            out_channels: 8,
        }
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kept_dims: 32,
            fusion: FusionMode::Concat,
            train_frac: 0.05,
            val_frac: 0.01,
            epochs: 20,
            batch: 32,
            lr: 1e-3,
        }
    }
}

fn sigma_from_row(r: &[f64; 9]) -> Mat3c {
    let mut m = Mat3c::zeros();
    for i in 0..3 {
        m[(i, i)] = C64::new(r[i], 0.0);
    }
    for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let z = C64::new(r[3 + 2 * k], r[4 + 2 * k]);
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
    }
    m
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Class covariances for the configured number of classes.
    pub fn class_sigmas(&self) -> Result<Vec<Mat3c>> {
        let sigmas: Vec<Mat3c> = if self.scene.sigmas.is_empty() {
            builtin_sigmas()
        } else {
            self.scene.sigmas.iter().map(sigma_from_row).collect()
        };
        if sigmas.len() != self.scene.classes {
            bail!(
                "{} classes need {} covariance matrices, got {} (set scene.sigmas)",
                self.scene.classes,
                self.scene.classes,
                sigmas.len()
            );
        }
        for (c, s) in sigmas.iter().enumerate() {
            validate_sigma(c, s)?;
        }
        Ok(sigmas)
    }

    /// Whether the run trains a denoiser at all.
    pub fn uses_diffusion(&self) -> bool {
        self.feature.use_low
    }

    /// Whether the run needs the enhancement module.
    pub fn uses_cafe(&self) -> bool {
        self.feature.use_high && self.contourlet.enabled
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        ensure!(s.height >= 16 && s.width >= 16, "scene must be at least 16x16");
        ensure!((2..=255).contains(&s.classes), "scene.classes must be in 2..=255");
        ensure!(s.looks >= 1, "scene.looks must be at least 1");
        self.class_sigmas()?;
        let c = &self.contourlet;
        ensure!((1..=6).contains(&c.levels), "contourlet.levels must be in 1..=6");
        ensure!((1..=5).contains(&c.direction_exponent), "contourlet.direction_exponent must be in 1..=5");
        ensure!(c.margin < s.height && c.margin < s.width, "contourlet.margin must be smaller than the scene");
        let sc = &self.schedule;
        ensure!(sc.steps >= 1, "schedule.steps must be positive");
        ensure!(
            sc.beta_start > 0.0 && sc.beta_start <= sc.beta_end && sc.beta_end < 1.0,
            "schedule betas must satisfy 0 < start <= end < 1"
        );
        let t = &self.training;
        ensure!(t.lr > 0.0 && t.lr.is_finite(), "training.lr must be positive");
        ensure!(t.batch >= 1, "training.batch must be positive");
        ensure!(t.depth >= 2, "training.depth must be at least 2");
        ensure!(t.patch >= 1 << t.depth && t.patch % (1 << t.depth) == 0, "training.patch must be a multiple of 2^depth");
        ensure!(t.patch <= s.height && t.patch <= s.width, "training.patch must fit the scene");
        ensure!(t.base_channels >= 4 && t.base_channels % 4 == 0, "training.base_channels must be a positive multiple of 4");
        ensure!(t.knowledge_channels >= 1, "training.knowledge_channels must be positive");
        ensure!(!t.guided || c.enabled, "guidance needs the contourlet decomposition");
        let f = &self.feature;
        ensure!(f.use_low || f.use_high, "at least one of feature.use_low / feature.use_high must be set");
        ensure!(!f.use_high || c.enabled, "high-frequency features need the contourlet decomposition");
        ensure!((1..=t.depth).contains(&f.layer), "feature.layer must be in 1..=training.depth");
        ensure!((1..=sc.steps).contains(&f.t_feat), "feature.t_feat must be in 1..=schedule.steps");
        ensure!(f.window >= 1 << t.depth && f.window % (1 << t.depth) == 0, "feature.window must be a multiple of 2^depth");
        ensure!(f.window % 4 == 0, "feature.window must be a multiple of 4");
        let cf = &self.cafe;
        ensure!(cf.lr > 0.0 && cf.batch >= 1 && cf.out_channels >= 1, "cafe settings must be positive");
        let k = &self.classifier;
        ensure!(k.kept_dims >= 1, "classifier.kept_dims must be positive");
        ensure!(
            k.train_frac > 0.0 && k.val_frac >= 0.0 && k.train_frac + k.val_frac < 1.0,
            "classifier split fractions must satisfy 0 < train, 0 <= val, train + val < 1"
        );
        ensure!(k.epochs >= 1 && k.batch >= 1 && k.lr > 0.0, "classifier training settings must be positive");
        if k.fusion == FusionMode::Add && f.use_low && self.uses_cafe() {
            ensure!(
                t.base_channels == cf.out_channels,
                "fusion = \"add\" needs training.base_channels == cafe.out_channels"
            );
        }
        Ok(())
    }
}
