//! On-disk artifacts: label maps, feature files, classifier snapshots,
//! splits, loss logs and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use kcdm_core::numerics::PcaModel;
use kcdm_core::polsar::LabelMap;
use kcdm_model::classifier::{EpochLog, FeatureReducer, HeadConfig, Metrics, PatchHead, Split};
use kcdm_nn::{Checkpoint, Tensor};

use crate::stages::Classifier;

pub const SCENE_FILE: &str = "scene.psar";
pub const PYRAMID_FILE: &str = "pyramid.cpyr";
pub const DIFFUSION_CKPT: &str = "diffusion.ckpt";
pub const DIFFUSION_LOSS: &str = "diffusion_loss.csv";
pub const CAFE_CKPT: &str = "cafe.ckpt";
pub const CAFE_LOSS: &str = "cafe_loss.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const CLASSIFIER_LOG: &str = "classifier_log.csv";
pub const PREDICTION_FILE: &str = "prediction.lmap";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABEL_MAGIC: &[u8; 6] = b"LMAP1\0";

pub fn features_file(layer: usize) -> String {
    format!("features_layer{layer}.ckpt")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `LMAP1\0`, then `u32` height, width and class count (little-endian),
/// then one byte per pixel.
pub fn label_map_bytes(map: &LabelMap) -> Vec<u8> {
    let mut out = LABEL_MAGIC.to_vec();
    for v in [map.height, map.width, map.classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&map.labels);
    out
}

pub fn parse_label_map(bytes: &[u8]) -> Result<LabelMap> {
    ensure!(bytes.len() >= 18 && &bytes[..6] == LABEL_MAGIC, "not a label map file");
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (u(6), u(10), u(14));
    ensure!(bytes.len() == 18 + h * w, "label map payload has {} bytes, expected {}", bytes.len() - 18, h * w);
    Ok(LabelMap::new(h, w, c, bytes[18..].to_vec())?)
}

pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    parse_label_map(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

/// Feature maps as a checkpoint container with tensors `f1` and/or `f2`.
pub fn features_checkpoint(f1: Option<&Tensor<f32>>, f2: Option<&Tensor<f32>>, layer: usize) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.meta.insert("layer".into(), layer as f64);
    for (name, t) in [("f1", f1), ("f2", f2)] {
        if let Some(t) = t {
            ck.tensors.push((name.into(), t.clone()));
        }
    }
    ck
}

/// One value per line after an `iteration,loss` header; iterations are 1-based.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{l:?}\n", i + 1));
    }
    s
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let (it, loss) = line.split_once(',').with_context(|| format!("line {} is not `iteration,loss`", n + 1))?;
        ensure!(it.parse::<usize>()? == out.len() + 1, "line {} is out of order", n + 1);
        out.push(loss.parse()?);
    }
    Ok(out)
}

pub fn classifier_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,val_accuracy\n");
    for e in log {
        let val = e.val_accuracy.map_or(String::new(), |v| format!("{v:?}"));
        s.push_str(&format!("{},{:?},{val}\n", e.epoch + 1, e.loss));
    }
    s
}

#[derive(Serialize, Deserialize)]
struct SplitJson {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

pub fn split_json(split: &Split) -> String {
    let s = SplitJson {
        train: split.train.clone(),
        val: split.val.clone(),
        test: split.test.clone(),
    };
    serde_json::to_string(&s).expect("split serialises")
}

pub fn parse_split(text: &str) -> Result<Split> {
    let s: SplitJson = serde_json::from_str(text)?;
    Ok(Split {
        train: s.train,
        val: s.val,
        test: s.test,
    })
}

#[derive(Serialize, Deserialize)]
struct ClassifierJson {
    in_channels: usize,
    classes: usize,
    width1: usize,
    width2: usize,
    params: Vec<Vec<f32>>,
    pca_mean: Vec<f64>,
    pca_basis: Vec<f64>,
    pca_dim: usize,
    pca_kept_dims: usize,
    pca_variances: Vec<f64>,
    scale: Vec<f64>,
}

pub fn classifier_json(clf: &Classifier) -> String {
    let c = &clf.head.config;
    let p = &clf.reducer.pca;
    let j = ClassifierJson {
        in_channels: c.in_channels,
        classes: c.classes,
        width1: c.width1,
        width2: c.width2,
        params: clf.head.params.clone(),
        pca_mean: p.mean.clone(),
        pca_basis: p.basis.clone(),
        pca_dim: p.dim,
        pca_kept_dims: p.kept_dims,
        pca_variances: p.variances.clone(),
        scale: clf.reducer.scale.clone(),
    };
    serde_json::to_string(&j).expect("classifier serialises")
}

pub fn parse_classifier(text: &str) -> Result<Classifier> {
    let j: ClassifierJson = serde_json::from_str(text)?;
    let config = HeadConfig {
        in_channels: j.in_channels,
        classes: j.classes,
        width1: j.width1,
        width2: j.width2,
    };
    let expected = PatchHead::<f32>::new(config, &mut kcdm_core::numerics::RngStream::new(0))?;
    let shapes: Vec<usize> = expected.params.iter().map(Vec::len).collect();
    let got: Vec<usize> = j.params.iter().map(Vec::len).collect();
    if shapes != got {
        bail!("classifier parameter shapes {got:?} do not match {shapes:?}");
    }
    let pca = PcaModel {
        mean: j.pca_mean,
        basis: j.pca_basis,
        dim: j.pca_dim,
        kept_dims: j.pca_kept_dims,
        variances: j.pca_variances,
    };
    ensure!(pca.basis.len() == pca.dim * pca.kept_dims && j.scale.len() == pca.kept_dims, "inconsistent PCA model");
    Ok(Classifier {
        reducer: FeatureReducer { pca, scale: j.scale },
        head: PatchHead { config, params: j.params },
        log: Vec::new(),
    })
}

pub fn metrics_value(m: &Metrics) -> Value {
    json!({
        "overall_accuracy": m.overall_accuracy,
        "average_accuracy": m.average_accuracy,
        "kappa": m.kappa,
        "per_class": m.per_class,
        "confusion": m.confusion.counts,
    })
}

/// Per-stage record of inputs, outputs (with SHA-256), timing and notes,
/// kept in `manifest.json` next to the artifacts.
pub struct Manifest {
    path: PathBuf,
    root: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let root = if path.exists() {
            serde_json::from_str(&fs::read_to_string(&path)?).context("parsing manifest")?
        } else {
            BTreeMap::new()
        };
        Ok(Manifest { path, root })
    }

    /// Records a stage; `inputs` and `outputs` are file names within `dir`.
    pub fn record(&mut self, dir: &Path, stage: &str, config_toml: &str, inputs: &[&str], outputs: &[&str], seconds: f64, extra: Value) -> Result<()> {
        let hashes = |names: &[&str]| -> Result<BTreeMap<String, String>> {
            names.iter().map(|n| Ok((n.to_string(), sha256_file(&dir.join(n))?))).collect()
        };
        let entry = json!({
            "config": config_toml,
            "inputs": hashes(inputs)?,
            "outputs": hashes(outputs)?,
            "seconds": seconds,
            "details": extra,
        });
        self.root.insert(stage.to_string(), entry);
        self.save()
    }

    pub fn record_failure(&mut self, stage: &str, error: &str) -> Result<()> {
        self.root.insert(stage.to_string(), json!({ "error": error }));
        self.save()
    }

    pub fn stage(&self, stage: &str) -> Option<&Value> {
        self.root.get(stage)
    }

    fn save(&self) -> Result<()> {
        write(&self.path, serde_json::to_string_pretty(&self.root)?)
    }
}
