use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::Result;

use crate::conv::ConvSpec;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Complex convolution with an optional complex bias.
#[derive(Debug, Clone)]
pub struct ComplexConv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
    pub cin: usize,
    pub cout: usize,
}

impl ComplexConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        spec: ConvSpec,
        bias: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let cin_g = cin / spec.groups.max(1);
        let fan_in = cin_g * kernel.0 * kernel.1;
        let weight = store.add_uniform(format!("{name}.w"), &[cout, cin_g, kernel.0, kernel.1], fan_in, rng)?;
        let bias = if bias {
            Some(store.add_zeros(format!("{name}.b"), &[cout, 1, 1])?)
        } else {
            None
        };
        Ok(ComplexConv {
            weight,
            bias,
            spec,
            cin,
            cout,
        })
    }

    /// Square `k × k` kernel with default (same, stride 1) geometry and bias.
    pub fn square<F: Real>(store: &mut ParamStore<F>, name: &str, cin: usize, cout: usize, k: usize, rng: &mut RngStream) -> Result<Self> {
        Self::new(store, name, cin, cout, (k, k), ConvSpec::default(), true, rng)
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv(x, w, b, self.spec)
    }
}

/// Depthwise `k × k` convolution followed by a pointwise `1 × 1` mix.
#[derive(Debug, Clone)]
pub struct DepthwiseSeparable {
    pub depthwise: ComplexConv,
    pub pointwise: ComplexConv,
}

impl DepthwiseSeparable {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cin: usize, cout: usize, k: usize, rng: &mut RngStream) -> Result<Self> {
        let depthwise = ComplexConv::new(store, &format!("{name}.dw"), cin, cin, (k, k), ConvSpec::grouped(cin), true, rng)?;
        let pointwise = ComplexConv::square(store, &format!("{name}.pw"), cin, cout, 1, rng)?;
        Ok(DepthwiseSeparable { depthwise, pointwise })
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, x: Var) -> Result<Var> {
        let h = self.depthwise.forward(g, x)?;
        self.pointwise.forward(g, h)
    }
}

/// Complex cross-attention with `1 × 1` projections.
///
/// Queries come from `x` (`[Cq, H, W]`), keys and values from `ctx`
/// (`[Ck, H', W']`). The value and output projections carry no bias, so an
/// all-zero context yields an all-zero output.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub q: ComplexConv,
    pub k: ComplexConv,
    pub v: ComplexConv,
    pub out: ComplexConv,
}

impl CrossAttention {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        query_channels: usize,
        context_channels: usize,
        dim: usize,
        out_channels: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let one = ConvSpec::default();
        Ok(CrossAttention {
            q: ComplexConv::new(store, &format!("{name}.q"), query_channels, dim, (1, 1), one, true, rng)?,
            k: ComplexConv::new(store, &format!("{name}.k"), context_channels, dim, (1, 1), one, true, rng)?,
            v: ComplexConv::new(store, &format!("{name}.v"), context_channels, dim, (1, 1), one, false, rng)?,
            out: ComplexConv::new(store, &format!("{name}.o"), dim, out_channels, (1, 1), one, false, rng)?,
        })
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, x: Var, ctx: Var) -> Result<Var> {
        let q = self.q.forward(g, x)?;
        let k = self.k.forward(g, ctx)?;
        let v = self.v.forward(g, ctx)?;
        let a = g.attention(q, k, v)?;
        self.out.forward(g, a)
    }
}

/// Real sinusoidal embedding of a timestep as a `[dim, 1, 1]` tensor:
/// `sin(t·ω_k)` in the first half and `cos(t·ω_k)` in the second, with
/// `ω_k = 10000^(-k/(dim/2))`.
pub fn timestep_embedding<F: Real>(t: usize, dim: usize) -> Tensor<F> {
    let half = dim / 2;
    let mut e = Tensor::zeros(&[dim, 1, 1]);
    for k in 0..half {
        let freq = (-(k as f64) / half.max(1) as f64 * 10000f64.ln()).exp();
        let a = t as f64 * freq;
        e.re[k] = F::of(a.sin());
        e.re[half + k] = F::of(a.cos());
    }
    e
}
