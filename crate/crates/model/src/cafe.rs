//! Cross-attention enhancement of directional high-frequency subbands with
//! dilated multi-scale fusion.

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::{ComplexConv, ConvSpec, CrossAttention, DepthwiseSeparable, Graph, ParamStore, Var};

/// Directional subbands per level the module is built for.
pub const CAFE_DIRECTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CafeConfig {
    pub levels: usize,
    pub directions: usize,
    /// Channels of each subband.
    pub data_channels: usize,
    /// Channels after each directional depthwise-separable conv.
    pub embed: usize,
    pub attn_dim: usize,
    pub out_channels: usize,
}

impl CafeConfig {
    pub fn new(levels: usize, data_channels: usize) -> Self {
        CafeConfig {
            levels,
            directions: CAFE_DIRECTIONS,
            data_channels,
            embed: 4,
            attn_dim: 4,
            out_channels: 8,
        }
    }
}

#[derive(Debug, Clone)]
struct Scale {
    directional: Vec<DepthwiseSeparable>,
    pairs: Vec<CrossAttention>,
}

#[derive(Debug, Clone)]
pub struct Cafe {
    pub config: CafeConfig,
    scales: Vec<Scale>,
    fuse: [ComplexConv; 3],
}

impl Cafe {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, config: CafeConfig, rng: &mut RngStream) -> Result<Self> {
        if config.directions != CAFE_DIRECTIONS {
            return Err(Error::InvalidArgument(format!(
                "enhancement module needs {CAFE_DIRECTIONS} directions, got {}",
                config.directions
            )));
        }
        if config.levels == 0 || config.data_channels == 0 || config.embed == 0 || config.out_channels == 0 {
            return Err(Error::InvalidArgument("enhancement module widths must be positive".into()));
        }
        let (e, half) = (config.embed, CAFE_DIRECTIONS / 2);
        let mut scales = Vec::new();
        for l in 0..config.levels {
            let directional = (0..CAFE_DIRECTIONS)
                .map(|d| DepthwiseSeparable::new(store, &format!("{name}.l{l}.dir{d}"), config.data_channels, e, 3, rng))
                .collect::<Result<_>>()?;
            let pairs = (0..half)
                .map(|d| CrossAttention::new(store, &format!("{name}.l{l}.pair{d}"), e, e, config.attn_dim, e, rng))
                .collect::<Result<_>>()?;
            scales.push(Scale { directional, pairs });
        }
        let cat = config.levels * half * e;
        let f = config.out_channels;
        let conv = |store: &mut ParamStore<F>, s: &str, ci: usize, dil: usize, rng: &mut RngStream| {
            ComplexConv::new(store, &format!("{name}.{s}"), ci, f, (3, 3), ConvSpec::dilated(dil), true, rng)
        };
        let fuse = [conv(store, "fuse1", cat, 1, rng)?, conv(store, "fuse2", f, 2, rng)?, conv(store, "fuse4", f, 4, rng)?];
        Ok(Cafe { config, scales, fuse })
    }

    /// `high[level][direction]` holds `[data_channels, H, W]` subbands.
    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, high: &[Vec<Var>]) -> Result<Var> {
        if high.len() != self.config.levels {
            return Err(Error::shape(self.config.levels, high.len()));
        }
        let half = CAFE_DIRECTIONS / 2;
        let mut per_scale = Vec::new();
        for (scale, bands) in self.scales.iter().zip(high) {
            if bands.len() != CAFE_DIRECTIONS {
                return Err(Error::shape(CAFE_DIRECTIONS, bands.len()));
            }
            let mut f = Vec::with_capacity(CAFE_DIRECTIONS);
            for (conv, &b) in scale.directional.iter().zip(bands) {
                let h = conv.forward(g, b)?;
                f.push(g.crelu(h));
            }
            for (d, att) in scale.pairs.iter().enumerate() {
                let (a, b) = (f[d], f[d + half]);
                let cross = att.forward(g, a, b)?;
                let sum = g.add(a, b)?;
                per_scale.push(g.add(sum, cross)?);
            }
        }
        let x = g.concat(&per_scale)?;
        let h1 = self.fuse[0].forward(g, x)?;
        let h1 = g.crelu(h1);
        let h2 = self.fuse[1].forward(g, h1)?;
        let h2 = g.crelu(h2);
        let h2 = g.add(h1, h2)?;
        let h3 = self.fuse[2].forward(g, h2)?;
        g.add(h2, h3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kcdm_nn::Tensor;

    fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        Tensor::from_parts(dims, (0..n).map(|_| rng.normal()).collect(), (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn run(store: &ParamStore<f64>, cafe: &Cafe, bands: Vec<Vec<Tensor<f64>>>) -> Tensor<f64> {
        let mut g = Graph::new(store);
        let vars: Vec<Vec<Var>> = bands.into_iter().map(|l| l.into_iter().map(|t| g.input(t)).collect()).collect();
        let y = cafe.forward(&mut g, &vars).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn preserves_spatial_size_and_zero_maps_to_zero() {
        let mut rng = RngStream::new(0);
        let mut store = ParamStore::new();
        let cafe = Cafe::new(&mut store, "cafe", CafeConfig::new(2, 3), &mut rng).unwrap();
        let bands = (0..2).map(|_| (0..8).map(|_| random(&[3, 6, 9], &mut rng)).collect()).collect();
        assert_eq!(run(&store, &cafe, bands).dims(), &[8, 6, 9]);
        let zeros = (0..2).map(|_| (0..8).map(|_| Tensor::zeros(&[3, 6, 9])).collect()).collect();
        let y = run(&store, &cafe, zeros);
        assert!(y.re.iter().chain(&y.im).all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_other_direction_counts() {
        let mut rng = RngStream::new(1);
        let mut store = ParamStore::<f64>::new();
        let cfg = CafeConfig {
            directions: 4,
            ..CafeConfig::new(1, 2)
        };
        assert!(Cafe::new(&mut store, "c", cfg, &mut rng).is_err());
        let cafe = Cafe::new(&mut store, "c", CafeConfig::new(1, 2), &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let bands: Vec<Var> = (0..4).map(|_| g.input(Tensor::zeros(&[2, 4, 4]))).collect();
        assert!(cafe.forward(&mut g, &[bands]).is_err());
    }
}
