//! Structural knowledge extraction from the finest high-frequency subbands.

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::{ComplexConv, ConvSpec, Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct SkemConfig {
    /// Directional subbands times data channels.
    pub in_channels: usize,
    /// Width of every branch.
    pub hidden: usize,
    /// Knowledge channels.
    pub out_channels: usize,
    /// Whether the third (single `1 × 1`) branch is present.
    pub branch_c: bool,
}

impl SkemConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        SkemConfig {
            in_channels,
            hidden: 8,
            out_channels,
            branch_c: true,
        }
    }
}

/// Three-branch complex conv network with a projected residual.
#[derive(Debug, Clone)]
pub struct Skem {
    pub config: SkemConfig,
    pub a: [ComplexConv; 2],
    pub b: [ComplexConv; 4],
    pub c: Option<ComplexConv>,
    pub compress: ComplexConv,
    pub residual: ComplexConv,
}

impl Skem {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, config: SkemConfig, rng: &mut RngStream) -> Result<Self> {
        let (ci, h, k) = (config.in_channels, config.hidden, config.out_channels);
        if ci == 0 || h == 0 || k == 0 {
            return Err(Error::InvalidArgument("knowledge network widths must be positive".into()));
        }
        let same = ConvSpec::default();
        let n = |s: &str| format!("{name}.{s}");
        let a = [
            ComplexConv::square(store, &n("a1"), ci, h, 1, rng)?,
            ComplexConv::square(store, &n("a2"), h, h, 3, rng)?,
        ];
        let b = [
            ComplexConv::square(store, &n("b1"), ci, h, 1, rng)?,
            ComplexConv::new(store, &n("b2"), h, h, (1, 3), same, true, rng)?,
            ComplexConv::new(store, &n("b3"), h, h, (3, 1), same, true, rng)?,
            ComplexConv::new(store, &n("b4"), h, h, (3, 3), ConvSpec::dilated(2), true, rng)?,
        ];
        let c = if config.branch_c {
            Some(ComplexConv::square(store, &n("c1"), ci, h, 1, rng)?)
        } else {
            None
        };
        let branches = if config.branch_c { 3 } else { 2 };
        let compress = ComplexConv::square(store, &n("compress"), branches * h, k, 1, rng)?;
        let residual = ComplexConv::square(store, &n("residual"), ci, k, 1, rng)?;
        Ok(Skem {
            config,
            a,
            b,
            c,
            compress,
            residual,
        })
    }

    /// Maps `[in_channels, H, W]` to knowledge `[out_channels, H, W]`.
    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, x: Var) -> Result<Var> {
        let c = g.value(x).chw().0;
        if c != self.config.in_channels {
            return Err(Error::shape(self.config.in_channels, c));
        }
        let mut h = self.a[0].forward(g, x)?;
        h = g.crelu(h);
        let ya = self.a[1].forward(g, h)?;

        let mut h = self.b[0].forward(g, x)?;
        for conv in &self.b[1..] {
            h = g.crelu(h);
            h = conv.forward(g, h)?;
        }
        let yb = h;

        let mut parts = vec![ya, yb];
        if let Some(conv) = &self.c {
            parts.push(conv.forward(g, x)?);
        }
        let cat = g.concat(&parts)?;
        let y = self.compress.forward(g, cat)?;
        let r = self.residual.forward(g, x)?;
        g.add(y, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kcdm_core::Complex;
    use kcdm_nn::Tensor;

    fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        Tensor::from_parts(dims, (0..n).map(|_| rng.normal()).collect(), (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn run(store: &ParamStore<f64>, skem: &Skem, x: &Tensor<f64>) -> Tensor<f64> {
        let mut g = Graph::new(store);
        let xv = g.input(x.clone());
        let y = skem.forward(&mut g, xv).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn preserves_spatial_size() {
        let mut rng = RngStream::new(0);
        let mut store = ParamStore::new();
        let skem = Skem::new(&mut store, "skem", SkemConfig::new(4, 3), &mut rng).unwrap();
        for (h, w) in [(5, 7), (8, 8), (16, 3)] {
            let y = run(&store, &skem, &random(&[4, h, w], &mut rng));
            assert_eq!(y.dims(), &[3, h, w]);
        }
    }

    #[test]
    fn zero_branches_leave_residual_projection() {
        let mut rng = RngStream::new(1);
        let mut store = ParamStore::new();
        let skem = Skem::new(&mut store, "skem", SkemConfig::new(2, 2), &mut rng).unwrap();
        let compress = store.get(skem.compress.weight).dims().to_vec();
        *store.get_mut(skem.compress.weight) = Tensor::zeros(&compress);
        let mut eye = Tensor::zeros(&[2, 2, 1, 1]);
        eye.set(0, Complex::new(1.0, 0.0));
        eye.set(3, Complex::new(1.0, 0.0));
        *store.get_mut(skem.residual.weight) = eye;
        let x = random(&[2, 6, 6], &mut rng);
        assert_eq!(run(&store, &skem, &x), x);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut rng = RngStream::new(2);
        let mut store = ParamStore::<f64>::new();
        let skem = Skem::new(&mut store, "skem", SkemConfig::new(4, 3), &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(&[3, 4, 4]));
        assert!(skem.forward(&mut g, x).is_err());
    }

    #[test]
    fn two_branch_variant_has_fewer_parameters() {
        let mut rng = RngStream::new(3);
        let mut three = ParamStore::<f64>::new();
        Skem::new(&mut three, "s", SkemConfig::new(4, 3), &mut rng).unwrap();
        let mut two = ParamStore::<f64>::new();
        let cfg = SkemConfig {
            branch_c: false,
            ..SkemConfig::new(4, 3)
        };
        Skem::new(&mut two, "s", cfg, &mut rng).unwrap();
        assert!(two.scalar_count() < three.scalar_count());
    }
}
