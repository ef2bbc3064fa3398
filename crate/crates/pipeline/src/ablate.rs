//! Ablation harness: module variants, decomposition depth and feature layer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;

use crate::artifacts::{metrics_value, write};
use crate::config::PipelineConfig;
use crate::stages::{run_layers, RunOutcome};

/// Module-level variants, weakest to full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Denoiser features from the normalised channels, no decomposition.
    NoNsct,
    /// Unguided denoiser features from the lowpass only.
    LowOnly,
    /// Enhancement-module features only.
    HighOnly,
    /// Unguided lowpass features plus enhancement features.
    LowHigh,
    /// Guided lowpass features plus enhancement features.
    Guided,
}

pub const VARIANTS: [Variant; 5] = [Variant::NoNsct, Variant::LowOnly, Variant::HighOnly, Variant::LowHigh, Variant::Guided];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::NoNsct => "no-nsct",
            Variant::LowOnly => "low-only",
            Variant::HighOnly => "high-only",
            Variant::LowHigh => "low+high",
            Variant::Guided => "guided-fusion",
        }
    }

    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        let (nsct, guided, low, high) = match self {
            Variant::NoNsct => (false, false, true, false),
            Variant::LowOnly => (true, false, true, false),
            Variant::HighOnly => (true, false, false, true),
            Variant::LowHigh => (true, false, true, true),
            Variant::Guided => (true, true, true, true),
        };
        c.contourlet.enabled = nsct;
        c.training.guided = guided;
        c.feature.use_low = low;
        c.feature.use_high = high;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Modules,
    Levels,
    Layers,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Modules => "module",
            Sweep::Levels => "levels",
            Sweep::Layers => "layer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub sweep: Sweep,
    pub setting: String,
    pub seed: u64,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub baseline_overall_accuracy: f64,
}

impl AblationRow {
    fn from_outcome(sweep: Sweep, setting: String, seed: u64, o: &RunOutcome) -> Self {
        let m = &o.report.metrics;
        AblationRow {
            sweep,
            setting,
            seed,
            overall_accuracy: m.overall_accuracy,
            average_accuracy: m.average_accuracy,
            kappa: m.kappa,
            baseline_overall_accuracy: o.report.baseline.overall_accuracy,
        }
    }
}

pub const LEVELS: [usize; 4] = [1, 2, 3, 4];
pub const LAYERS: [usize; 3] = [1, 2, 3];

/// Runs the requested sweeps for every seed. With `dir`, each run's metrics
/// are written as soon as it finishes and the CSV grows row by row.
pub fn run_ablation(base: &PipelineConfig, seeds: &[u64], sweeps: &[Sweep], dir: Option<&Path>) -> Result<Vec<AblationRow>> {
    let mut rows: Vec<AblationRow> = Vec::new();
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let emit = |rows: &mut Vec<AblationRow>, row: AblationRow, o: &RunOutcome| -> Result<()> {
        log::info!("{} {} seed {}: OA {:.4}", row.sweep.name(), row.setting, row.seed, row.overall_accuracy);
        if let Some(d) = dir {
            let name = format!("{}_{}_seed{}.json", row.sweep.name(), row.setting, row.seed);
            let v = serde_json::json!({ "metrics": metrics_value(&o.report.metrics), "baseline": metrics_value(&o.report.baseline) });
            write(&d.join(name), serde_json::to_string_pretty(&v)?)?;
        }
        rows.push(row);
        if let Some(d) = dir {
            write(&d.join("ablation.csv"), csv(rows))?;
        }
        Ok(())
    };
    for &seed in seeds {
        let seeded = PipelineConfig { seed, ..base.clone() };
        for &sweep in sweeps {
            match sweep {
                Sweep::Modules => {
                    for v in VARIANTS {
                        let o = run_layers(&v.apply(&seeded), &[seeded.feature.layer])?.remove(0);
                        emit(&mut rows, AblationRow::from_outcome(sweep, v.name().into(), seed, &o), &o)?;
                    }
                }
                Sweep::Levels => {
                    for l in LEVELS {
                        let mut c = Variant::Guided.apply(&seeded);
                        c.contourlet.levels = l;
                        let o = run_layers(&c, &[c.feature.layer])?.remove(0);
                        emit(&mut rows, AblationRow::from_outcome(sweep, format!("L{l}"), seed, &o), &o)?;
                    }
                }
                Sweep::Layers => {
                    let c = Variant::Guided.apply(&seeded);
                    let layers: Vec<usize> = LAYERS.iter().copied().filter(|l| *l <= c.training.depth).collect();
                    for o in run_layers(&c, &layers)? {
                        emit(&mut rows, AblationRow::from_outcome(sweep, format!("layer{}", o.layer), seed, &o), &o)?;
                    }
                }
            }
        }
    }
    if let Some(d) = dir {
        write(&d.join("ablation.txt"), table(&rows))?;
    }
    Ok(rows)
}

pub fn csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("sweep,setting,seed,overall_accuracy,average_accuracy,kappa,baseline_overall_accuracy\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:?},{:?},{:?},{:?}",
            r.sweep.name(),
            r.setting,
            r.seed,
            r.overall_accuracy,
            r.average_accuracy,
            r.kappa,
            r.baseline_overall_accuracy
        );
    }
    s
}

/// Fixed-width table, one line per row, percentages to two decimals.
pub fn table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<8} {:<14} {:>4} {:>7} {:>7} {:>7} {:>7}\n", "sweep", "setting", "seed", "OA%", "AA%", "Kappa", "ML OA%");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:<14} {:>4} {:>7.2} {:>7.2} {:>7.4} {:>7.2}",
            r.sweep.name(),
            r.setting,
            r.seed,
            100.0 * r.overall_accuracy,
            100.0 * r.average_accuracy,
            r.kappa,
            100.0 * r.baseline_overall_accuracy
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_map_to_valid_distinct_configs() {
        let base = PipelineConfig::default();
        let cfgs: Vec<PipelineConfig> = VARIANTS.iter().map(|v| v.apply(&base)).collect();
        for (v, c) in VARIANTS.iter().zip(&cfgs) {
            c.validate().unwrap_or_else(|e| panic!("{}: {e:#}", v.name()));
        }
        for i in 0..cfgs.len() {
            for j in i + 1..cfgs.len() {
                assert_ne!(cfgs[i], cfgs[j]);
            }
        }
        assert_eq!(Variant::Guided.apply(&base), base);
    }

    #[test]
    fn table_and_csv_have_one_line_per_row() {
        let row = AblationRow {
            sweep: Sweep::Modules,
            setting: "low-only".into(),
            seed: 2,
            overall_accuracy: 0.5,
            average_accuracy: 0.25,
            kappa: 0.1,
            baseline_overall_accuracy: 0.75,
        };
        let rows = vec![row.clone(), row];
        assert_eq!(csv(&rows).lines().count(), 3);
        let t = table(&rows);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("50.00") && t.contains("75.00"));
    }
}
