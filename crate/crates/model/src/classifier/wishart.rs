//! Complex Wishart maximum-likelihood baseline classifier.

use kcdm_core::polsar::{CoherencyField, LabelMap, Mat3c, UNLABELED};
use kcdm_core::{Error, Result};

/// Class centres estimated from training pixels; a pixel goes to the class
/// minimising `ln|Σ_c| + tr(Σ_c⁻¹ T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartMl {
    pub centres: Vec<Mat3c>,
    log_dets: Vec<f64>,
    inverses: Vec<Mat3c>,
}

impl WishartMl {
    pub fn fit(field: &CoherencyField, labels: &LabelMap, train: &[usize]) -> Result<Self> {
        let mut sums = vec![Mat3c::zeros(); labels.classes];
        let mut counts = vec![0usize; labels.classes];
        for &p in train {
            let l = labels.labels[p];
            if l == UNLABELED || l as usize >= labels.classes {
                return Err(Error::InvalidArgument(format!("training pixel {p} has no usable label")));
            }
            sums[l as usize] += field.t[p];
            counts[l as usize] += 1;
        }
        let mut centres = Vec::with_capacity(labels.classes);
        for (c, (s, n)) in sums.into_iter().zip(&counts).enumerate() {
            if *n == 0 {
                return Err(Error::InvalidArgument(format!("class {c} has no training pixels")));
            }
            centres.push(s / kcdm_core::Complex::new(*n as f64, 0.0));
        }
        Self::from_centres(centres)
    }

    pub fn from_centres(centres: Vec<Mat3c>) -> Result<Self> {
        let mut log_dets = Vec::with_capacity(centres.len());
        let mut inverses = Vec::with_capacity(centres.len());
        for (c, s) in centres.iter().enumerate() {
            let det = s.determinant().re;
            let inv = s.try_inverse().filter(|_| det > 0.0);
            let inv = inv.ok_or_else(|| Error::InvalidArgument(format!("class {c} centre is singular")))?;
            log_dets.push(det.ln());
            inverses.push(inv);
        }
        Ok(WishartMl { centres, log_dets, inverses })
    }

    pub fn distances(&self, t: &Mat3c) -> Vec<f64> {
        self.inverses
            .iter()
            .zip(&self.log_dets)
            .map(|(inv, ld)| ld + (inv * t).trace().re)
            .collect()
    }

    /// Nearest class; ties go to the lowest index.
    pub fn classify(&self, t: &Mat3c) -> u8 {
        let d = self.distances(t);
        let mut best = 0;
        for (i, v) in d.iter().enumerate() {
            if *v < d[best] {
                best = i;
            }
        }
        best as u8
    }

    pub fn predict_map(&self, field: &CoherencyField) -> Result<LabelMap> {
        let labels = field.t.iter().map(|t| self.classify(t)).collect();
        LabelMap::new(field.height, field.width, self.centres.len(), labels)
    }
}
