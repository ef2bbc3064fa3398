//! Eager tape for complex-valued networks with reverse-mode gradients.
//!
//! Every complex number is treated as a pair of reals: the gradient stored
//! for `z = a + ib` is `∂L/∂a + i ∂L/∂b`, and the loss must be a real scalar.

use kcdm_core::numerics::Real;
use kcdm_core::{Error, Result};

use crate::attention::{attention_backward, attention_forward, AttentionCache};
use crate::conv::{conv_backward, conv_forward, ConvSpec};
use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Label value skipped by [`Graph::softmax_ce`].
pub const IGNORE_LABEL: u8 = 255;

enum Op<F> {
    Input,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    CRelu(Var),
    Concat(Vec<Var>),
    Upsample2(Var),
    AvgPool2(Var),
    GroupNorm {
        x: Var,
        groups: usize,
        rstd: Vec<F>,
    },
    ChannelBias {
        x: Var,
        b: Var,
        real_to_both: bool,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        cache: AttentionCache<F>,
    },
    SqModMean(Var),
    SoftmaxCe {
        logits: Var,
        labels: Vec<u8>,
        probs: Vec<F>,
        count: usize,
    },
}

struct Node<F> {
    op: Op<F>,
    /// `None` for parameters, which are read from the store.
    value: Option<Tensor<F>>,
}

pub struct Graph<'a, F: Real> {
    params: &'a ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients of one backward pass, per node and per parameter.
pub struct Backward<F> {
    nodes: Vec<Option<Tensor<F>>>,
    params: Grads<F>,
}

impl<F: Real> Backward<F> {
    pub fn of(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].as_ref()
    }

    pub fn params(&self) -> &Grads<F> {
        &self.params
    }

    pub fn into_params(self) -> Grads<F> {
        self.params
    }
}

fn same_dims<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(a.dims(), b.dims()));
    }
    Ok(())
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let re = a.re.iter().zip(&b.re).map(|(x, y)| f(*x, *y)).collect();
    let im = a.im.iter().zip(&b.im).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_parts(a.dims(), re, im).expect("matching lengths")
}

impl<'a, F: Real> Graph<'a, F> {
    pub fn new(params: &'a ParamStore<F>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'a ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        match (&self.nodes[v.0].op, &self.nodes[v.0].value) {
            (_, Some(t)) => t,
            (Op::Param(id), None) => self.params.get(*id),
            _ => unreachable!("non-parameter nodes always hold a value"),
        }
    }

    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(Op::Input, t)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let y = conv_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), spec)?;
        Ok(self.push(Op::Conv { x, w, b, spec }, y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_dims(self.value(a), self.value(b))?;
        let y = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_dims(self.value(a), self.value(b))?;
        let y = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), y))
    }

    /// Elementwise complex product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_dims(ta, tb)?;
        let mut y = Tensor::zeros(ta.dims());
        for i in 0..ta.len() {
            y.set(i, ta.get(i) * tb.get(i));
        }
        Ok(self.push(Op::Mul(a, b), y))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let mut y = self.value(a).clone();
        y.scale_real(s);
        self.push(Op::Scale(a, s), y)
    }

    /// ReLU applied separately to the real and imaginary parts.
    pub fn crelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let re = x.re.iter().map(|v| v.max(F::zero())).collect();
        let im = x.im.iter().map(|v| v.max(F::zero())).collect();
        let y = Tensor::from_parts(x.dims(), re, im).expect("same length");
        self.push(Op::CRelu(a), y)
    }

    /// Channel concatenation of `[C_i, H, W]` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (_, h, w) = self.value(*first).chw();
        let mut c_total = 0;
        for p in parts {
            let (c, ph, pw) = self.value(*p).chw();
            if (ph, pw) != (h, w) {
                return Err(Error::shape((h, w), (ph, pw)));
            }
            c_total += c;
        }
        let mut y = Tensor::zeros(&[c_total, h, w]);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            y.re[off..off + t.len()].copy_from_slice(&t.re);
            y.im[off..off + t.len()].copy_from_slice(&t.im);
            off += t.len();
        }
        Ok(self.push(Op::Concat(parts.to_vec()), y))
    }

    /// Nearest-neighbour upsampling by two in both directions.
    pub fn upsample2(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (c, h, w) = x.chw();
        let mut y = Tensor::zeros(&[c, 2 * h, 2 * w]);
        for ch in 0..c {
            for yy in 0..2 * h {
                for xx in 0..2 * w {
                    let src = (ch * h + yy / 2) * w + xx / 2;
                    let dst = (ch * 2 * h + yy) * 2 * w + xx;
                    y.re[dst] = x.re[src];
                    y.im[dst] = x.im[src];
                }
            }
        }
        self.push(Op::Upsample2(a), y)
    }

    /// 2×2 average pooling with stride two; odd trailing rows/columns are dropped.
    pub fn avg_pool2(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (c, h, w) = x.chw();
        if h < 2 || w < 2 {
            return Err(Error::shape("at least 2x2", (h, w)));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut y = Tensor::zeros(&[c, ho, wo]);
        let q = F::of(0.25);
        for ch in 0..c {
            for yy in 0..ho {
                for xx in 0..wo {
                    let dst = (ch * ho + yy) * wo + xx;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let src = (ch * h + 2 * yy + dy) * w + 2 * xx + dx;
                        y.re[dst] += q * x.re[src];
                        y.im[dst] += q * x.im[src];
                    }
                }
            }
        }
        Ok(self.push(Op::AvgPool2(a), y))
    }

    /// Complex group normalization without affine terms: each group is
    /// centred on its complex mean and divided by `√(E|x-μ|² + eps)`.
    pub fn group_norm(&mut self, a: Var, groups: usize, eps: f64) -> Result<Var> {
        let x = self.value(a);
        let (c, h, w) = x.chw();
        if groups == 0 || c % groups != 0 {
            return Err(Error::shape(format!("channels divisible by {groups} groups"), c));
        }
        let m = c / groups * h * w;
        let mut y = Tensor::zeros(x.dims());
        let mut rstd = Vec::with_capacity(groups);
        for g in 0..groups {
            let r = g * m..(g + 1) * m;
            let inv = 1.0 / m as f64;
            let mr = x.re[r.clone()].iter().map(|v| v.as_f64()).sum::<f64>() * inv;
            let mi = x.im[r.clone()].iter().map(|v| v.as_f64()).sum::<f64>() * inv;
            let var = x.re[r.clone()]
                .iter()
                .zip(&x.im[r.clone()])
                .map(|(a, b)| (a.as_f64() - mr).powi(2) + (b.as_f64() - mi).powi(2))
                .sum::<f64>()
                * inv;
            let s = 1.0 / (var + eps).sqrt();
            for i in r {
                y.re[i] = F::of((x.re[i].as_f64() - mr) * s);
                y.im[i] = F::of((x.im[i].as_f64() - mi) * s);
            }
            rstd.push(F::of(s));
        }
        Ok(self.push(Op::GroupNorm { x: a, groups, rstd }, y))
    }

    /// Adds a per-channel complex bias `[C, 1, 1]` to every pixel of `[C, H, W]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.bias_impl(x, b, false)
    }

    /// Adds the real part of a per-channel bias `[C, 1, 1]` to both the real
    /// and the imaginary part of every pixel; the imaginary part of `b` is
    /// ignored and receives zero gradient.
    pub fn real_bias_both(&mut self, x: Var, b: Var) -> Result<Var> {
        self.bias_impl(x, b, true)
    }

    fn bias_impl(&mut self, x: Var, b: Var, real_to_both: bool) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (c, h, w) = tx.chw();
        if tb.len() != c {
            return Err(Error::shape(c, tb.len()));
        }
        let mut y = tx.clone();
        let n = h * w;
        for ch in 0..c {
            let (br, bi) = if real_to_both { (tb.re[ch], tb.re[ch]) } else { (tb.re[ch], tb.im[ch]) };
            y.re[ch * n..(ch + 1) * n].iter_mut().for_each(|v| *v += br);
            y.im[ch * n..(ch + 1) * n].iter_mut().for_each(|v| *v += bi);
        }
        Ok(self.push(Op::ChannelBias { x, b, real_to_both }, y))
    }

    /// Complex attention of queries `[D, Hq, Wq]` over keys/values `[D, Hk, Wk]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (y, cache) = attention_forward(self.value(q), self.value(k), self.value(v))?;
        Ok(self.push(Op::Attention { q, k, v, cache }, y))
    }

    /// Mean squared modulus over all elements; a real scalar.
    pub fn sq_mod_mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.energy() / x.len().max(1) as f64;
        self.push(Op::SqModMean(a), Tensor::scalar(F::of(m), F::zero()))
    }

    /// `sq_mod_mean(a - b)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        Ok(self.sq_mod_mean(d))
    }

    /// Mean cross-entropy of per-pixel softmax over the real parts of
    /// `[C, H, W]` logits. Pixels labelled [`IGNORE_LABEL`] are skipped.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[u8]) -> Result<Var> {
        let x = self.value(logits);
        let (c, h, w) = x.chw();
        let n = h * w;
        if labels.len() != n {
            return Err(Error::shape(n, labels.len()));
        }
        let mut probs = vec![F::zero(); c * n];
        let mut loss = 0.0;
        let mut count = 0;
        for (p, &l) in labels.iter().enumerate() {
            if l == IGNORE_LABEL {
                continue;
            }
            if l as usize >= c {
                return Err(Error::InvalidArgument(format!("label {l} with {c} classes")));
            }
            let max = (0..c).map(|k| x.re[k * n + p].as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..c).map(|k| (x.re[k * n + p].as_f64() - max).exp()).sum();
            for k in 0..c {
                probs[k * n + p] = F::of((x.re[k * n + p].as_f64() - max).exp() / z);
            }
            loss += z.ln() + max - x.re[l as usize * n + p].as_f64();
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no labelled pixels".into()));
        }
        let value = Tensor::scalar(F::of(loss / count as f64), F::zero());
        Ok(self.push(
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
                count,
            },
            value,
        ))
    }

    /// Reverse pass from a real scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Backward<F>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(1, self.value(loss).len()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut seed = Tensor::zeros(self.value(loss).dims());
        seed.re[0] = F::one();
        grads[loss.0] = Some(seed);
        let mut params = Grads::new(self.params.len());

        fn acc<F: Real>(grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => params.accumulate(*id, &gy),
                Op::Conv { x, w, b, spec } => {
                    let cg = conv_backward(self.value(*x), self.value(*w), &gy, *spec)?;
                    acc(&mut grads, *x, cg.dx);
                    acc(&mut grads, *w, cg.dw);
                    if let Some(b) = b {
                        let db = cg.db.reshaped(self.value(*b).dims())?;
                        acc(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, gy.clone());
                    acc(&mut grads, *b, gy.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, gy.clone());
                    let mut neg = gy.clone();
                    neg.scale_real(-F::one());
                    acc(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(ta.dims());
                    let mut gb = Tensor::zeros(tb.dims());
                    for j in 0..gy.len() {
                        ga.set(j, gy.get(j) * tb.get(j).conj());
                        gb.set(j, gy.get(j) * ta.get(j).conj());
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let mut g = gy.clone();
                    g.scale_real(*s);
                    acc(&mut grads, *a, g);
                }
                Op::CRelu(a) => {
                    let x = self.value(*a);
                    let g = zip_map(&gy, x, |g, v| if v > F::zero() { g } else { F::zero() });
                    acc(&mut grads, *a, g);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let dims = self.value(*p).dims().to_vec();
                        let n: usize = dims.iter().product();
                        let g = Tensor::from_parts(&dims, gy.re[off..off + n].to_vec(), gy.im[off..off + n].to_vec())?;
                        acc(&mut grads, *p, g);
                        off += n;
                    }
                }
                Op::Upsample2(a) => {
                    let (c, h, w) = self.value(*a).chw();
                    let mut g = Tensor::zeros(&[c, h, w]);
                    for ch in 0..c {
                        for yy in 0..2 * h {
                            for xx in 0..2 * w {
                                let dst = (ch * h + yy / 2) * w + xx / 2;
                                let src = (ch * 2 * h + yy) * 2 * w + xx;
                                g.re[dst] += gy.re[src];
                                g.im[dst] += gy.im[src];
                            }
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::AvgPool2(a) => {
                    let (c, h, w) = self.value(*a).chw();
                    let (ho, wo) = (h / 2, w / 2);
                    let mut g = Tensor::zeros(&[c, h, w]);
                    let q = F::of(0.25);
                    for ch in 0..c {
                        for yy in 0..ho {
                            for xx in 0..wo {
                                let src = (ch * ho + yy) * wo + xx;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    let dst = (ch * h + 2 * yy + dy) * w + 2 * xx + dx;
                                    g.re[dst] += q * gy.re[src];
                                    g.im[dst] += q * gy.im[src];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::GroupNorm { x, groups, rstd } => {
                    // dx = r (dy - mean dy) - r y mean(dy · y), with y = (x - μ) r.
                    let y = self.nodes[i].value.as_ref().expect("group norm output");
                    let m = y.len() / groups;
                    let mut g = Tensor::zeros(y.dims());
                    for (gi, &r) in rstd.iter().enumerate() {
                        let rg = gi * m..(gi + 1) * m;
                        let inv = 1.0 / m as f64;
                        let (mut sr, mut si, mut dot) = (0.0, 0.0, 0.0);
                        for j in rg.clone() {
                            let (dr, di) = (gy.re[j].as_f64(), gy.im[j].as_f64());
                            sr += dr;
                            si += di;
                            dot += dr * y.re[j].as_f64() + di * y.im[j].as_f64();
                        }
                        let (mr, mi, md) = (sr * inv, si * inv, dot * inv);
                        let r = r.as_f64();
                        for j in rg {
                            g.re[j] = F::of(r * (gy.re[j].as_f64() - mr - y.re[j].as_f64() * md));
                            g.im[j] = F::of(r * (gy.im[j].as_f64() - mi - y.im[j].as_f64() * md));
                        }
                    }
                    acc(&mut grads, *x, g);
                }
                Op::ChannelBias { x, b, real_to_both } => {
                    let tb = self.value(*b);
                    let c = tb.len();
                    let n = gy.len() / c;
                    let mut gb = Tensor::zeros(tb.dims());
                    for ch in 0..c {
                        let sr: F = gy.re[ch * n..(ch + 1) * n].iter().copied().sum();
                        let si: F = gy.im[ch * n..(ch + 1) * n].iter().copied().sum();
                        if *real_to_both {
                            gb.re[ch] = sr + si;
                        } else {
                            gb.re[ch] = sr;
                            gb.im[ch] = si;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, gy.clone());
                }
                Op::Attention { q, k, v, cache } => {
                    let (dq, dk, dv) =
                        attention_backward(self.value(*q), self.value(*k), self.value(*v), cache, &gy)?;
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::SqModMean(a) => {
                    let x = self.value(*a);
                    let s = gy.re[0] * F::of(2.0 / x.len().max(1) as f64);
                    let mut g = x.clone();
                    g.scale_real(s);
                    acc(&mut grads, *a, g);
                }
                Op::SoftmaxCe {
                    logits,
                    labels,
                    probs,
                    count,
                } => {
                    let x = self.value(*logits);
                    let n = labels.len();
                    let c = x.len() / n;
                    let s = gy.re[0] / F::of(*count as f64);
                    let mut g = Tensor::zeros(x.dims());
                    for (p, &l) in labels.iter().enumerate() {
                        if l == IGNORE_LABEL {
                            continue;
                        }
                        for k in 0..c {
                            let onehot = if k == l as usize { F::one() } else { F::zero() };
                            g.re[k * n + p] = s * (probs[k * n + p] - onehot);
                        }
                    }
                    acc(&mut grads, *logits, g);
                }
            }
            grads[i] = Some(gy);
        }
        Ok(Backward { nodes: grads, params })
    }
}
