//! Principal component analysis over dense row-major sample matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Fitted projection: `z = basisᵀ (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `dim × kept_dims`, row-major; columns are orthonormal components.
    pub basis: Vec<f64>,
    pub dim: usize,
    pub kept_dims: usize,
    /// Variances of all `dim` components, descending.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    /// Fraction of the total variance carried by the kept components.
    pub fn explained_ratio(&self) -> f64 {
        let total = self.total_variance();
        if total <= 0.0 {
            return 1.0;
        }
        self.variances[..self.kept_dims].iter().sum::<f64>() / total
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.basis[i * self.kept_dims + k]).collect()
    }
}

/// Fits a PCA model to `samples` (`n × dim`, row-major).
///
/// When `kept_dims` exceeds the numerical rank, the trailing components are
/// zero-variance directions taken from the eigenbasis in a fixed order and a
/// warning is logged.
pub fn pca_fit(samples: &[f64], dim: usize, kept_dims: usize) -> Result<PcaModel> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::Dimension(format!(
            "{} values is not a whole number of {dim}-dimensional rows",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two samples".into()));
    }
    if kept_dims == 0 || kept_dims > dim {
        return Err(Error::InvalidArgument(format!(
            "kept_dims {kept_dims} must lie in 1..={dim}"
        )));
    }

    let mut mean = vec![0.0; dim];
    for row in samples.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in samples.chunks_exact(dim) {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    // Descending variance; index order breaks ties so the result is stable.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let variances: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let scale = variances.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let rank = variances.iter().filter(|&&v| v > 1e-12 * scale).count();
    if kept_dims > rank {
        log::warn!("PCA: kept_dims {kept_dims} exceeds data rank {rank}; padding with zero-variance directions");
    }

    let mut basis = vec![0.0; dim * kept_dims];
    for (k, &src) in order.iter().take(kept_dims).enumerate() {
        let col = eig.eigenvectors.column(src);
        // Sign convention: largest-magnitude entry positive (first one on ties).
        let mut pivot = 0;
        for i in 1..dim {
            if col[i].abs() > col[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            basis[i * kept_dims + k] = sign * col[i];
        }
    }

    Ok(PcaModel {
        mean,
        basis,
        dim,
        kept_dims,
        variances,
    })
}

/// Projects `samples` (`n × dim`) to `n × kept_dims`.
pub fn pca_transform(model: &PcaModel, samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() % model.dim != 0 {
        return Err(Error::Dimension(format!(
            "sample length {} is not a multiple of model dimension {}",
            samples.len(),
            model.dim
        )));
    }
    let k = model.kept_dims;
    let mut out = Vec::with_capacity(samples.len() / model.dim * k);
    let mut centered = vec![0.0; model.dim];
    for row in samples.chunks_exact(model.dim) {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&model.mean) {
            *c = v - m;
        }
        for j in 0..k {
            let mut s = 0.0;
            for (i, c) in centered.iter().enumerate() {
                s += model.basis[i * k + j] * c;
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// Maps projected rows back to the input space.
pub fn pca_inverse(model: &PcaModel, projected: &[f64]) -> Result<Vec<f64>> {
    let k = model.kept_dims;
    if projected.len() % k != 0 {
        return Err(Error::Dimension(format!(
            "projected length {} is not a multiple of {k}",
            projected.len()
        )));
    }
    let mut out = Vec::with_capacity(projected.len() / k * model.dim);
    for z in projected.chunks_exact(k) {
        for i in 0..model.dim {
            let mut s = model.mean[i];
            for (j, zj) in z.iter().enumerate() {
                s += model.basis[i * k + j] * zj;
            }
            out.push(s);
        }
    }
    Ok(out)
}
