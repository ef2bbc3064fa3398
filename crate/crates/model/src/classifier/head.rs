//! Real-valued patch CNN classifier with hand-written backpropagation.
//!
//! Layout: 3×3 valid conv → ReLU → 3×3 valid conv → ReLU → global average
//! pool → linear map to class logits. A pixel is classified from the
//! `PATCH × PATCH` window whose index `(PATCH/2, PATCH/2)` is the pixel.

use rayon::prelude::*;

use kcdm_core::numerics::{gemm, reflect_index, Real, RngStream, Trans};
use kcdm_core::polsar::{LabelMap, UNLABELED};
use kcdm_core::{Error, Result};

pub const PATCH: usize = 16;
/// Reflect padding before / after each spatial axis so every pixel owns a
/// full patch.
pub const PAD_BEFORE: usize = PATCH / 2;
pub const PAD_AFTER: usize = PATCH - PATCH / 2 - 1;
const K: usize = 3;
const POOL: usize = PATCH - 2 * (K - 1);

/// Real planar grid `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid<F> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<F>,
}

impl<F: Real> RealGrid<F> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(channels * height * width, data.len()));
        }
        Ok(RealGrid { channels, height, width, data })
    }

    /// Symmetric (edge-excluded) reflection padding.
    pub fn reflect_pad(&self, before: usize, after: usize) -> RealGrid<F> {
        let (h, w) = (self.height + before + after, self.width + before + after);
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            let plane = &self.data[c * self.height * self.width..(c + 1) * self.height * self.width];
            for y in 0..h {
                let sy = reflect_index(y as isize - before as isize, self.height as isize);
                for x in 0..w {
                    let sx = reflect_index(x as isize - before as isize, self.width as isize);
                    data.push(plane[sy * self.width + sx]);
                }
            }
        }
        RealGrid { channels: self.channels, height: h, width: w, data }
    }

    /// The `PATCH × PATCH` window at `(y0, x0)`, `[channels, PATCH, PATCH]`.
    pub fn window(&self, y0: usize, x0: usize) -> Vec<F> {
        let mut out = Vec::with_capacity(self.channels * PATCH * PATCH);
        for c in 0..self.channels {
            for y in y0..y0 + PATCH {
                let row = (c * self.height + y) * self.width;
                out.extend_from_slice(&self.data[row + x0..row + x0 + PATCH]);
            }
        }
        out
    }

    pub fn cast<G: Real>(&self) -> RealGrid<G> {
        RealGrid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }
}

/// Patches of a padded grid: pixel `p` of the unpadded `width`-wide scene.
fn pixel_patch<F: Real>(padded: &RealGrid<F>, width: usize, p: usize) -> Vec<F> {
    padded.window(p / width, p % width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    pub in_channels: usize,
    pub classes: usize,
    pub width1: usize,
    pub width2: usize,
}

impl HeadConfig {
    pub fn new(in_channels: usize, classes: usize) -> Self {
        HeadConfig {
            in_channels,
            classes,
            width1: 64,
            width2: 32,
        }
    }

    fn shapes(&self) -> [usize; 6] {
        let (c0, c1, c2) = (self.in_channels, self.width1, self.width2);
        [c1 * c0 * K * K, c1, c2 * c1 * K * K, c2, self.classes * c2, self.classes]
    }
}

/// Parameters in the order conv1 weight, conv1 bias, conv2 weight, conv2
/// bias, linear weight, linear bias. Conv weights are `[out, in·3·3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchHead<F> {
    pub config: HeadConfig,
    pub params: Vec<Vec<F>>,
}

/// im2col for a 3×3 valid convolution: `[cin·9, ho·wo]`.
fn im2col<F: Real>(x: &[F], cin: usize, h: usize, w: usize) -> Vec<F> {
    let (ho, wo) = (h - K + 1, w - K + 1);
    let mut cols = vec![F::zero(); cin * K * K * ho * wo];
    for c in 0..cin {
        for ky in 0..K {
            for kx in 0..K {
                let row = ((c * K + ky) * K + kx) * ho * wo;
                for y in 0..ho {
                    let src = (c * h + y + ky) * w + kx;
                    cols[row + y * wo..row + (y + 1) * wo].copy_from_slice(&x[src..src + wo]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<F: Real>(cols: &[F], cin: usize, h: usize, w: usize) -> Vec<F> {
    let (ho, wo) = (h - K + 1, w - K + 1);
    let mut x = vec![F::zero(); cin * h * w];
    for c in 0..cin {
        for ky in 0..K {
            for kx in 0..K {
                let row = ((c * K + ky) * K + kx) * ho * wo;
                for y in 0..ho {
                    let dst = (c * h + y + ky) * w + kx;
                    for (d, s) in x[dst..dst + wo].iter_mut().zip(&cols[row + y * wo..row + (y + 1) * wo]) {
                        *d += *s;
                    }
                }
            }
        }
    }
    x
}

/// 3×3 valid conv plus bias and ReLU; returns the activation and the im2col
/// buffer.
fn conv_relu<F: Real>(x: &[F], cin: usize, h: usize, w: usize, weight: &[F], bias: &[F], cout: usize) -> (Vec<F>, Vec<F>) {
    let n = (h - K + 1) * (w - K + 1);
    let cols = im2col(x, cin, h, w);
    let mut out = vec![F::zero(); cout * n];
    gemm(cout, cin * K * K, n, F::one(), weight, Trans::No, &cols, Trans::No, F::zero(), &mut out);
    for (o, b) in out.chunks_exact_mut(n).zip(bias) {
        for v in o.iter_mut() {
            *v = (*v + *b).max(F::zero());
        }
    }
    (out, cols)
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = logits.iter().map(|l| (*l - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct PatchForward<F> {
    cols1: Vec<F>,
    h1: Vec<F>,
    cols2: Vec<F>,
    h2: Vec<F>,
    pooled: Vec<F>,
    logits: Vec<F>,
}

impl<F: Real> PatchHead<F> {
    /// He-normal conv weights, zero biases and a zero linear layer, so the
    /// initial prediction is uniform.
    pub fn new(config: HeadConfig, rng: &mut RngStream) -> Result<Self> {
        if config.in_channels == 0 || config.classes < 2 || config.width1 == 0 || config.width2 == 0 {
            return Err(Error::InvalidArgument(format!("invalid head config {config:?}")));
        }
        let shapes = config.shapes();
        let fan = [config.in_channels * K * K, config.width1 * K * K];
        let mut params: Vec<Vec<F>> = shapes.iter().map(|n| vec![F::zero(); *n]).collect();
        for (layer, fan_in) in fan.iter().enumerate() {
            let std = (2.0 / *fan_in as f64).sqrt();
            for v in params[2 * layer].iter_mut() {
                *v = F::of(std * rng.normal());
            }
        }
        Ok(PatchHead { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    fn check_patch(&self, patch: &[F]) -> Result<()> {
        let n = self.config.in_channels * PATCH * PATCH;
        if patch.len() != n {
            return Err(Error::shape(n, patch.len()));
        }
        Ok(())
    }

    fn forward_patch(&self, patch: &[F]) -> PatchForward<F> {
        let c = &self.config;
        let p = &self.params;
        let (h1, cols1) = conv_relu(patch, c.in_channels, PATCH, PATCH, &p[0], &p[1], c.width1);
        let s1 = PATCH - K + 1;
        let (h2, cols2) = conv_relu(&h1, c.width1, s1, s1, &p[2], &p[3], c.width2);
        let inv = F::of(1.0 / (POOL * POOL) as f64);
        let pooled: Vec<F> = h2.chunks_exact(POOL * POOL).map(|ch| ch.iter().copied().sum::<F>() * inv).collect();
        let logits = self.linear(&pooled);
        PatchForward { cols1, h1, cols2, h2, pooled, logits }
    }

    fn linear(&self, pooled: &[F]) -> Vec<F> {
        let w2 = self.config.width2;
        (0..self.config.classes)
            .map(|k| {
                let row = &self.params[4][k * w2..(k + 1) * w2];
                row.iter().zip(pooled).map(|(a, b)| *a * *b).sum::<F>() + self.params[5][k]
            })
            .collect()
    }

    /// Class logits of one `[in_channels, PATCH, PATCH]` patch.
    pub fn logits(&self, patch: &[F]) -> Result<Vec<F>> {
        self.check_patch(patch)?;
        Ok(self.forward_patch(patch).logits)
    }

    pub fn probabilities(&self, patch: &[F]) -> Result<Vec<F>> {
        Ok(softmax(&self.logits(patch)?))
    }

    /// Cross-entropy of one patch against `label` and its parameter
    /// gradients.
    pub fn loss_and_grads(&self, patch: &[F], label: usize) -> Result<(f64, Vec<Vec<F>>)> {
        self.check_patch(patch)?;
        let c = &self.config;
        if label >= c.classes {
            return Err(Error::InvalidArgument(format!("label {label} outside {} classes", c.classes)));
        }
        let f = self.forward_patch(patch);
        let prob = softmax(&f.logits);
        let loss = -prob[label].as_f64().ln();
        let mut dlogits = prob;
        dlogits[label] -= F::one();

        let mut grads: Vec<Vec<F>> = self.params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        let (w1, w2) = (c.width1, c.width2);
        let mut dpooled = vec![F::zero(); w2];
        for k in 0..c.classes {
            grads[5][k] = dlogits[k];
            for j in 0..w2 {
                grads[4][k * w2 + j] = dlogits[k] * f.pooled[j];
                dpooled[j] += self.params[4][k * w2 + j] * dlogits[k];
            }
        }

        let n2 = POOL * POOL;
        let inv = F::of(1.0 / n2 as f64);
        let mut dh2 = vec![F::zero(); w2 * n2];
        for j in 0..w2 {
            for q in 0..n2 {
                if f.h2[j * n2 + q] > F::zero() {
                    dh2[j * n2 + q] = dpooled[j] * inv;
                }
            }
            grads[3][j] = dh2[j * n2..(j + 1) * n2].iter().copied().sum();
        }
        let k2 = w1 * K * K;
        gemm(w2, n2, k2, F::one(), &dh2, Trans::No, &f.cols2, Trans::Yes, F::zero(), &mut grads[2]);
        let mut dcols2 = vec![F::zero(); k2 * n2];
        gemm(k2, w2, n2, F::one(), &self.params[2], Trans::Yes, &dh2, Trans::No, F::zero(), &mut dcols2);

        let s1 = PATCH - K + 1;
        let n1 = s1 * s1;
        let mut dh1 = col2im(&dcols2, w1, s1, s1);
        for (d, h) in dh1.iter_mut().zip(&f.h1) {
            if *h <= F::zero() {
                *d = F::zero();
            }
        }
        for j in 0..w1 {
            grads[1][j] = dh1[j * n1..(j + 1) * n1].iter().copied().sum();
        }
        let k1 = c.in_channels * K * K;
        gemm(w1, n1, k1, F::one(), &dh1, Trans::No, &f.cols1, Trans::Yes, F::zero(), &mut grads[0]);
        Ok((loss, grads))
    }

    /// Per-pixel class of the listed pixels of a `width`-wide scene, one
    /// patch at a time. `padded` is the scene grid padded by
    /// `PAD_BEFORE`/`PAD_AFTER`.
    pub fn predict_pixels(&self, padded: &RealGrid<F>, width: usize, pixels: &[usize]) -> Result<Vec<u8>> {
        pixels
            .par_iter()
            .map(|&p| Ok(argmax(&self.logits(&pixel_patch(padded, width, p))?) as u8))
            .collect()
    }

    /// Logits for every pixel of `grid`, `[height·width][classes]`, computed
    /// with one convolution pass over the padded scene and a sliding
    /// average pool.
    pub fn logit_map(&self, grid: &RealGrid<F>) -> Result<Vec<Vec<F>>> {
        let c = &self.config;
        if grid.channels != c.in_channels {
            return Err(Error::shape(c.in_channels, grid.channels));
        }
        let padded = grid.reflect_pad(PAD_BEFORE, PAD_AFTER);
        let (h0, w0) = (padded.height, padded.width);
        let (h1, _) = conv_relu(&padded.data, c.in_channels, h0, w0, &self.params[0], &self.params[1], c.width1);
        let (ha, wa) = (h0 - K + 1, w0 - K + 1);
        let (h2, _) = conv_relu(&h1, c.width1, ha, wa, &self.params[2], &self.params[3], c.width2);
        let (hb, wb) = (ha - K + 1, wa - K + 1);
        // Integral image per channel, `(hb+1) × (wb+1)`.
        let stride = wb + 1;
        let integral: Vec<Vec<f64>> = h2
            .par_chunks_exact(hb * wb)
            .map(|plane| {
                let mut s = vec![0.0; (hb + 1) * stride];
                for y in 0..hb {
                    let mut row = 0.0;
                    for x in 0..wb {
                        row += plane[y * wb + x].as_f64();
                        s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
                    }
                }
                s
            })
            .collect();
        let inv = 1.0 / (POOL * POOL) as f64;
        let out = (0..grid.height * grid.width)
            .into_par_iter()
            .map(|p| {
                let (y, x) = (p / grid.width, p % grid.width);
                let pooled: Vec<F> = integral
                    .iter()
                    .map(|s| {
                        let sum = s[(y + POOL) * stride + x + POOL] - s[y * stride + x + POOL] - s[(y + POOL) * stride + x] + s[y * stride + x];
                        F::of(sum * inv)
                    })
                    .collect();
                self.linear(&pooled)
            })
            .collect();
        Ok(out)
    }

    /// Full-scene argmax map.
    pub fn predict_map(&self, grid: &RealGrid<F>) -> Result<LabelMap> {
        let labels = self.logit_map(grid)?.iter().map(|l| argmax(l) as u8).collect();
        LabelMap::new(grid.height, grid.width, self.config.classes, labels)
    }
}

/// Minimal Adam over the flat parameter lists of a [`PatchHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAdam<F> {
    pub lr: f64,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> HeadAdam<F> {
    pub fn new(head: &PatchHead<F>, lr: f64) -> Self {
        let zeros: Vec<Vec<F>> = head.params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        HeadAdam { lr, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, head: &mut PatchHead<F>, grads: &[Vec<F>]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step as i32);
        let c2 = 1.0 - B2.powi(self.step as i32);
        let (b1, b2) = (F::of(B1), F::of(B2));
        for (((p, g), m), v) in head.params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                let mh = m[i].as_f64() / c1;
                let vh = v[i].as_f64() / c2;
                p[i] -= F::of(self.lr * mh / (vh.sqrt() + EPS));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig { epochs: 20, batch: 32, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch.
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

/// Trains the head with Adam on cross-entropy over patches centred on the
/// `train` pixels, reporting validation accuracy on `val` after each epoch.
pub fn train_head<F: Real>(
    head: &mut PatchHead<F>,
    grid: &RealGrid<F>,
    labels: &LabelMap,
    train: &[usize],
    val: &[usize],
    cfg: &HeadTrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<EpochLog>> {
    if (grid.height, grid.width) != (labels.height, labels.width) {
        return Err(Error::shape((labels.height, labels.width), (grid.height, grid.width)));
    }
    if grid.channels != head.config.in_channels {
        return Err(Error::shape(head.config.in_channels, grid.channels));
    }
    if cfg.batch == 0 || cfg.lr <= 0.0 {
        return Err(Error::InvalidArgument(format!("invalid training config {cfg:?}")));
    }
    let classes = head.config.classes;
    let mut counts = vec![0usize; classes];
    for &p in train.iter().chain(val) {
        let l = labels.labels[p];
        if l == UNLABELED || l as usize >= classes {
            return Err(Error::InvalidArgument(format!("pixel {p} has no usable label")));
        }
    }
    for &p in train {
        counts[labels.labels[p] as usize] += 1;
    }
    if let Some(c) = counts.iter().position(|n| *n == 0) {
        return Err(Error::InvalidArgument(format!("class {c} has no training pixels")));
    }

    let padded = grid.reflect_pad(PAD_BEFORE, PAD_AFTER);
    let width = grid.width;
    let mut adam = HeadAdam::new(head, cfg.lr);
    let mut order = train.to_vec();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let frozen = &*head;
            let parts: Vec<(f64, Vec<Vec<F>>)> = chunk
                .par_iter()
                .map(|&p| frozen.loss_and_grads(&pixel_patch(&padded, width, p), labels.labels[p] as usize))
                .collect::<Result<_>>()?;
            let scale = F::of(1.0 / chunk.len() as f64);
            let mut grads: Vec<Vec<F>> = head.params.iter().map(|p| vec![F::zero(); p.len()]).collect();
            for (loss, g) in &parts {
                total += loss;
                for (acc, part) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.iter_mut().zip(part) {
                        *a += *b * scale;
                    }
                }
            }
            adam.update(head, &grads);
        }
        let loss = total / order.len() as f64;
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite classifier loss at epoch {epoch}")));
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            let pred = head.predict_pixels(&padded, width, val)?;
            let hits = pred.iter().zip(val).filter(|(p, v)| **p == labels.labels[**v]).count();
            Some(hits as f64 / val.len() as f64)
        };
        log::info!("classifier epoch {epoch}: loss {loss:.4}, val accuracy {val_accuracy:?}");
        log.push(EpochLog { epoch, loss, val_accuracy });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_grid(c: usize, h: usize, w: usize, rng: &mut RngStream) -> RealGrid<f64> {
        RealGrid::new(c, h, w, (0..c * h * w).map(|_| rng.normal()).collect()).unwrap()
    }

    fn small_head(c: usize, classes: usize, rng: &mut RngStream) -> PatchHead<f64> {
        let cfg = HeadConfig { width1: 4, width2: 3, ..HeadConfig::new(c, classes) };
        let mut head = PatchHead::new(cfg, rng).unwrap();
        for v in head.params.iter_mut().flatten() {
            *v += 0.1 * rng.normal();
        }
        head
    }

    #[test]
    fn argmax_and_tie_break() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        let p = softmax(&[1000.0f64, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn im2col_adjoint() {
        let mut rng = RngStream::new(0);
        let x: Vec<f64> = (0..2 * 5 * 6).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..2 * 9 * 3 * 4).map(|_| rng.normal()).collect();
        let lhs: f64 = im2col(&x, 2, 5, 6).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&y, 2, 5, 6)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = RngStream::new(1);
        let (cin, cout, h, w) = (2, 3, 6, 5);
        let x: Vec<f64> = (0..cin * h * w).map(|_| rng.normal()).collect();
        let wt: Vec<f64> = (0..cout * cin * 9).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.normal()).collect();
        let (out, _) = conv_relu(&x, cin, h, w, &wt, &b, cout);
        for o in 0..cout {
            for y in 0..h - 2 {
                for xx in 0..w - 2 {
                    let mut s = b[o];
                    for c in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                s += wt[((o * cin + c) * 3 + ky) * 3 + kx] * x[(c * h + y + ky) * w + xx + kx];
                            }
                        }
                    }
                    assert!((out[(o * (h - 2) + y) * (w - 2) + xx] - s.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..3 {
            let mut rng = RngStream::new(seed);
            let head = small_head(2, 3, &mut rng);
            let patch: Vec<f64> = (0..2 * PATCH * PATCH).map(|_| rng.normal()).collect();
            let label = seed as usize % 3;
            let (_, grads) = head.loss_and_grads(&patch, label).unwrap();
            let step = 1e-6;
            for (li, layer) in head.params.iter().enumerate() {
                for i in (0..layer.len()).step_by(1 + layer.len() / 12) {
                    let mut plus = head.clone();
                    plus.params[li][i] += step;
                    let mut minus = head.clone();
                    minus.params[li][i] -= step;
                    let num = (plus.loss_and_grads(&patch, label).unwrap().0 - minus.loss_and_grads(&patch, label).unwrap().0) / (2.0 * step);
                    let a = grads[li][i];
                    assert!((a - num).abs() <= 1e-6 * a.abs().max(num.abs()).max(1.0), "seed {seed} layer {li}[{i}]: {a} vs {num}");
                }
            }
        }
    }

    #[test]
    fn initial_prediction_is_uniform() {
        let mut rng = RngStream::new(2);
        let head = PatchHead::<f64>::new(HeadConfig::new(4, 5), &mut rng).unwrap();
        let patch: Vec<f64> = (0..4 * PATCH * PATCH).map(|_| rng.normal()).collect();
        let (loss, _) = head.loss_and_grads(&patch, 3).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn full_map_matches_per_patch_prediction() {
        let mut rng = RngStream::new(3);
        let head = small_head(3, 4, &mut rng);
        let grid = random_grid(3, 11, 9, &mut rng);
        let padded = grid.reflect_pad(PAD_BEFORE, PAD_AFTER);
        let map = head.logit_map(&grid).unwrap();
        for p in 0..grid.height * grid.width {
            let direct = head.logits(&pixel_patch(&padded, grid.width, p)).unwrap();
            for (a, b) in map[p].iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10, "pixel {p}");
            }
        }
        let all: Vec<usize> = (0..99).collect();
        assert_eq!(head.predict_map(&grid).unwrap().labels, head.predict_pixels(&padded, grid.width, &all).unwrap());
    }

    #[test]
    fn window_centres_the_pixel() {
        let grid = RealGrid::new(1, 5, 7, (0..35).map(|v| v as f64).collect()).unwrap();
        let padded = grid.reflect_pad(PAD_BEFORE, PAD_AFTER);
        assert_eq!((padded.height, padded.width), (5 + PATCH - 1, 7 + PATCH - 1));
        for p in 0..35 {
            let patch = pixel_patch(&padded, 7, p);
            assert_eq!(patch[PAD_BEFORE * PATCH + PAD_BEFORE], p as f64);
        }
    }

    #[test]
    fn rejects_classes_without_training_pixels() {
        let mut rng = RngStream::new(4);
        let grid = random_grid(2, 8, 8, &mut rng).cast::<f32>();
        let labels = LabelMap::new(8, 8, 3, (0..64).map(|p| (p % 2) as u8).collect()).unwrap();
        let mut head = PatchHead::<f32>::new(HeadConfig::new(2, 3), &mut rng).unwrap();
        let err = train_head(&mut head, &grid, &labels, &[0, 1, 2], &[], &HeadTrainConfig::default(), &mut rng);
        assert!(err.is_err());
    }
}
