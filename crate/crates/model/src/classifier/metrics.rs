//! Confusion matrix and the OA / AA / Kappa summary.

use kcdm_core::polsar::{LabelMap, UNLABELED};
use kcdm_core::{Error, Result};

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let classes = rows.len();
        if classes == 0 || rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Dimension("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { classes, counts: rows })
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes).map(|c| self.counts[c][c]).sum();
        diag as f64 / self.total().max(1) as f64
    }

    /// Recall per class; `None` for classes without truth pixels.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let n = self.row(c);
                (n > 0).then(|| self.counts[c][c] as f64 / n as f64)
            })
            .collect()
    }

    /// Mean recall over classes that have truth pixels.
    pub fn average_accuracy(&self) -> f64 {
        let recalls: Vec<f64> = self.per_class().into_iter().flatten().collect();
        recalls.iter().sum::<f64>() / recalls.len().max(1) as f64
    }

    /// `(OA - p_e) / (1 - p_e)` with `p_e = Σ row_c·col_c / total²`. When
    /// `p_e = 1` agreement is only possible by chance; Kappa is then 1 for a
    /// perfect prediction and 0 otherwise.
    pub fn kappa(&self) -> f64 {
        let total = self.total() as f64;
        if total == 0.0 {
            return 0.0;
        }
        let pe = (0..self.classes).map(|c| self.row(c) as f64 * self.col(c) as f64).sum::<f64>() / (total * total);
        let oa = self.overall_accuracy();
        if (1.0 - pe).abs() < 1e-15 {
            return if oa == 1.0 { 1.0 } else { 0.0 };
        }
        (oa - pe) / (1.0 - pe)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            overall_accuracy: self.overall_accuracy(),
            average_accuracy: self.average_accuracy(),
            kappa: self.kappa(),
            per_class: self.per_class(),
            confusion: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

/// Scores `pred` against `truth` over the labelled pixels of `truth`, or
/// only over `pixels` when given.
pub fn evaluate(pred: &LabelMap, truth: &LabelMap, pixels: Option<&[usize]>) -> Result<Metrics> {
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(Error::shape((truth.height, truth.width), (pred.height, pred.width)));
    }
    let classes = truth.classes.max(pred.classes);
    let mut cm = ConfusionMatrix::new(classes);
    let all: Vec<usize>;
    let pixels = match pixels {
        Some(p) => p,
        None => {
            all = (0..truth.labels.len()).collect();
            &all
        }
    };
    for &p in pixels {
        let t = *truth.labels.get(p).ok_or_else(|| Error::InvalidArgument(format!("pixel {p} outside the map")))?;
        let q = pred.labels[p];
        if t == UNLABELED {
            continue;
        }
        if q == UNLABELED {
            return Err(Error::InvalidArgument(format!("pixel {p} has truth but no prediction")));
        }
        cm.add(t as usize, q as usize);
    }
    if cm.total() == 0 {
        return Err(Error::InvalidArgument("no labelled pixels to evaluate".into()));
    }
    Ok(cm.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_example() {
        let cm = ConfusionMatrix::from_rows(vec![vec![50, 10], vec![5, 35]]).unwrap();
        let m = cm.metrics();
        assert!((m.overall_accuracy - 0.85).abs() <= 1e-12);
        assert!((m.average_accuracy - (50.0 / 60.0 + 35.0 / 40.0) / 2.0).abs() <= 1e-12);
        assert!((m.kappa - 0.34 / 0.49).abs() <= 1e-12);
    }

    #[test]
    fn perfect_and_chance_level() {
        let truth = LabelMap::vertical_split(4, 6);
        let m = evaluate(&truth, &truth, None).unwrap();
        assert_eq!((m.overall_accuracy, m.average_accuracy, m.kappa), (1.0, 1.0, 1.0));
        let constant = LabelMap::new(4, 6, 2, vec![0; 24]).unwrap();
        let m = evaluate(&constant, &truth, None).unwrap();
        assert_eq!(m.overall_accuracy, 0.5);
        assert_eq!(m.kappa, 0.0);
        assert_eq!(m.per_class, vec![Some(1.0), Some(0.0)]);
    }

    #[test]
    fn unlabelled_pixels_are_skipped_and_empty_is_an_error() {
        let mut truth = LabelMap::vertical_split(2, 2);
        truth.labels[0] = UNLABELED;
        let pred = LabelMap::new(2, 2, 2, vec![1, 0, 1, 1]).unwrap();
        let m = evaluate(&pred, &truth, None).unwrap();
        assert_eq!(m.confusion.total(), 3);
        let none = LabelMap::new(2, 2, 2, vec![UNLABELED; 4]).unwrap();
        assert!(evaluate(&pred, &none, None).is_err());
        assert!(evaluate(&pred, &truth, Some(&[0])).is_err());
    }
}
