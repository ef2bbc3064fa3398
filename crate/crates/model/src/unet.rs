//! Knowledge-guided complex U-Net noise predictor.

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};
use kcdm_nn::{timestep_embedding, ComplexConv, ConvSpec, CrossAttention, Graph, ParamStore, Tensor, Var};

use crate::diffusion::Denoiser;

#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub in_channels: usize,
    /// Number of resolution levels, at least 2.
    pub depth: usize,
    pub base_channels: usize,
    /// Knowledge channels; 0 builds a network without guidance.
    pub knowledge_channels: usize,
    /// Decoder levels (1-based, 1 = full resolution) that attend to the knowledge.
    pub attention_levels: Vec<usize>,
    pub time_embed_dim: usize,
    pub attn_dim: usize,
    pub norm_groups: usize,
    pub group_norm: bool,
}

impl UNetConfig {
    pub fn new(in_channels: usize, knowledge_channels: usize) -> Self {
        UNetConfig {
            in_channels,
            depth: 3,
            base_channels: 16,
            knowledge_channels,
            attention_levels: vec![1, 2, 3],
            time_embed_dim: 16,
            attn_dim: 8,
            norm_groups: 4,
            group_norm: true,
        }
    }

    /// Channels at level `l`: the base width, doubled below the top level.
    pub fn channels(&self, level: usize) -> usize {
        if level <= 1 {
            self.base_channels
        } else {
            2 * self.base_channels
        }
    }

    fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidArgument(format!("U-Net depth must be at least 2, got {}", self.depth)));
        }
        if self.in_channels == 0 || self.base_channels == 0 || self.time_embed_dim == 0 || self.attn_dim == 0 {
            return Err(Error::InvalidArgument("U-Net widths must be positive".into()));
        }
        if self.group_norm && (self.norm_groups == 0 || self.base_channels % self.norm_groups != 0) {
            return Err(Error::InvalidArgument(format!(
                "{} norm groups do not divide {} channels",
                self.norm_groups, self.base_channels
            )));
        }
        if let Some(&l) = self.attention_levels.iter().find(|&&l| l == 0 || l > self.depth) {
            return Err(Error::InvalidArgument(format!("attention level {l} outside 1..={}", self.depth)));
        }
        Ok(())
    }
}

/// conv → norm → crelu → time bias → conv → norm → crelu.
#[derive(Debug, Clone)]
struct Block {
    conv1: ComplexConv,
    conv2: ComplexConv,
    time: ComplexConv,
}

impl Block {
    fn new<F: Real>(store: &mut ParamStore<F>, name: &str, cin: usize, cout: usize, tdim: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(Block {
            conv1: ComplexConv::square(store, &format!("{name}.conv1"), cin, cout, 3, rng)?,
            conv2: ComplexConv::square(store, &format!("{name}.conv2"), cout, cout, 3, rng)?,
            time: ComplexConv::square(store, &format!("{name}.time"), tdim, cout, 1, rng)?,
        })
    }

    fn forward<F: Real>(&self, g: &mut Graph<'_, F>, x: Var, temb: Var, cfg: &UNetConfig) -> Result<Var> {
        let norm = |g: &mut Graph<'_, F>, h: Var| -> Result<Var> {
            if cfg.group_norm {
                g.group_norm(h, cfg.norm_groups, 1e-5)
            } else {
                Ok(h)
            }
        };
        let mut h = self.conv1.forward(g, x)?;
        h = norm(g, h)?;
        h = g.crelu(h);
        let tb = self.time.forward(g, temb)?;
        h = g.real_bias_both(h, tb)?;
        h = self.conv2.forward(g, h)?;
        h = norm(g, h)?;
        Ok(g.crelu(h))
    }
}

/// Predicted noise and the decoder activations per level (index 0 = level 1).
pub struct UNetOutput {
    pub eps: Var,
    pub taps: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub config: UNetConfig,
    stem: ComplexConv,
    enc: Vec<Block>,
    down: Vec<ComplexConv>,
    mid: Block,
    up: Vec<ComplexConv>,
    dec: Vec<Block>,
    attn: Vec<Option<CrossAttention>>,
    head: ComplexConv,
}

impl UNet {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, config: UNetConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let td = config.time_embed_dim;
        let n = |s: String| format!("{name}.{s}");
        let stem = ComplexConv::square(store, &n("stem".into()), config.in_channels, config.channels(1), 3, rng)?;
        let mut enc = Vec::new();
        let mut down = Vec::new();
        for l in 1..config.depth {
            if l > 1 {
                down.push(ComplexConv::new(
                    store,
                    &n(format!("down{l}")),
                    config.channels(l - 1),
                    config.channels(l),
                    (3, 3),
                    ConvSpec::strided(2),
                    true,
                    rng,
                )?);
            }
            let c = config.channels(l);
            enc.push(Block::new(store, &n(format!("enc{l}")), c, c, td, rng)?);
        }
        let d = config.depth;
        down.push(ComplexConv::new(
            store,
            &n(format!("down{d}")),
            config.channels(d - 1),
            config.channels(d),
            (3, 3),
            ConvSpec::strided(2),
            true,
            rng,
        )?);
        let cd = config.channels(d);
        let mid = Block::new(store, &n(format!("dec{d}")), cd, cd, td, rng)?;
        let mut up = Vec::new();
        let mut dec = Vec::new();
        for l in (1..d).rev() {
            let c = config.channels(l);
            up.push(ComplexConv::square(store, &n(format!("up{l}")), config.channels(l + 1), c, 3, rng)?);
            dec.push(Block::new(store, &n(format!("dec{l}")), 2 * c, c, td, rng)?);
        }
        let mut attn = Vec::new();
        for l in 1..=d {
            let a = if config.knowledge_channels > 0 && config.attention_levels.contains(&l) {
                let c = config.channels(l);
                Some(CrossAttention::new(store, &n(format!("attn{l}")), c, config.knowledge_channels, config.attn_dim, c, rng)?)
            } else {
                None
            };
            attn.push(a);
        }
        let head = ComplexConv::square(store, &n("head".into()), config.channels(1), config.in_channels, 3, rng)?;
        Ok(UNet {
            config,
            stem,
            enc,
            down,
            mid,
            up,
            dec,
            attn,
            head,
        })
    }

    pub fn guided(&self) -> bool {
        self.attn.iter().any(Option::is_some)
    }

    fn guide<F: Real>(&self, g: &mut Graph<'_, F>, level: usize, h: Var, knowledge: &[Var]) -> Result<Var> {
        match (&self.attn[level - 1], knowledge.get(level - 1)) {
            (Some(att), Some(&k)) => {
                let a = att.forward(g, h, k)?;
                g.add(h, a)
            }
            _ => Ok(h),
        }
    }

    /// Runs the network on `lt` (`[in_channels, H, W]`) at timestep `t`.
    /// Without knowledge the attention pathway is skipped.
    pub fn forward<F: Real>(&self, g: &mut Graph<'_, F>, lt: Var, t: usize, knowledge: Option<Var>) -> Result<UNetOutput> {
        let cfg = &self.config;
        let (c, h, w) = g.value(lt).chw();
        if c != cfg.in_channels {
            return Err(Error::shape(cfg.in_channels, c));
        }
        let unit = 1usize << (cfg.depth - 1);
        if h % unit != 0 || w % unit != 0 {
            return Err(Error::InvalidArgument(format!(
                "input {h}x{w} not divisible by {unit} at U-Net level {}",
                cfg.depth
            )));
        }
        let mut levels = Vec::new();
        if let Some(k) = knowledge {
            if !self.guided() {
                return Err(Error::InvalidArgument("knowledge passed to an unguided U-Net".into()));
            }
            let (kc, kh, kw) = g.value(k).chw();
            if kc != cfg.knowledge_channels || kh != h || kw != w {
                return Err(Error::shape([cfg.knowledge_channels, h, w], [kc, kh, kw]));
            }
            levels.push(k);
            for _ in 1..cfg.depth {
                let prev = *levels.last().unwrap();
                let pooled = g.avg_pool2(prev)?;
                levels.push(pooled);
            }
        }
        let emb = timestep_embedding::<F>(t, cfg.time_embed_dim);
        let temb = g.input(emb);

        let mut x = self.stem.forward(g, lt)?;
        let mut skips = Vec::new();
        for (i, block) in self.enc.iter().enumerate() {
            if i > 0 {
                x = self.down[i - 1].forward(g, x)?;
            }
            x = block.forward(g, x, temb, cfg)?;
            skips.push(x);
        }
        x = self.down[cfg.depth - 2].forward(g, x)?;
        x = self.mid.forward(g, x, temb, cfg)?;
        x = self.guide(g, cfg.depth, x, &levels)?;
        let mut taps = vec![x];
        for (i, l) in (1..cfg.depth).rev().enumerate() {
            x = g.upsample2(x);
            x = self.up[i].forward(g, x)?;
            x = g.concat(&[x, skips[l - 1]])?;
            x = self.dec[i].forward(g, x, temb, cfg)?;
            x = self.guide(g, l, x, &levels)?;
            taps.push(x);
        }
        taps.reverse();
        let eps = self.head.forward(g, x)?;
        Ok(UNetOutput { eps, taps })
    }
}

/// Binds a [`UNet`] to its parameters for sampling.
pub struct BoundUNet<'a, F> {
    pub net: &'a UNet,
    pub store: &'a ParamStore<F>,
}

impl<F: Real> Denoiser<F> for BoundUNet<'_, F> {
    fn predict(&self, lt: &Tensor<F>, t: usize, knowledge: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let mut g = Graph::new(self.store);
        let x = g.input(lt.clone());
        let k = knowledge.map(|k| g.input(k.clone()));
        let out = self.net.forward(&mut g, x, t, k)?;
        Ok(g.value(out.eps).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        Tensor::from_parts(dims, (0..n).map(|_| rng.normal()).collect(), (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn small(knowledge: usize) -> UNetConfig {
        UNetConfig {
            base_channels: 4,
            norm_groups: 2,
            attn_dim: 4,
            ..UNetConfig::new(2, knowledge)
        }
    }

    #[test]
    fn output_matches_input_shape_and_taps_halve() {
        let mut rng = RngStream::new(0);
        let mut store = ParamStore::new();
        let net = UNet::new(&mut store, "u", small(3), &mut rng).unwrap();
        for s in [16, 32] {
            let mut g = Graph::new(&store);
            let x = g.input(random(&[2, s, s], &mut rng));
            let k = g.input(random(&[3, s, s], &mut rng));
            let out = net.forward(&mut g, x, 4, Some(k)).unwrap();
            assert_eq!(g.value(out.eps).dims(), &[2, s, s]);
            assert_eq!(out.taps.len(), 3);
            for (i, tap) in out.taps.iter().enumerate() {
                let (c, h, w) = g.value(*tap).chw();
                assert_eq!((c, h, w), (net.config.channels(i + 1), s >> i, s >> i));
            }
        }
    }

    #[test]
    fn zero_knowledge_equals_unguided_path() {
        let mut rng = RngStream::new(1);
        let mut store = ParamStore::new();
        let net = UNet::new(&mut store, "u", small(3), &mut rng).unwrap();
        let x = random(&[2, 8, 8], &mut rng);
        let bound = BoundUNet { net: &net, store: &store };
        let guided = bound.predict(&x, 3, Some(&Tensor::zeros(&[3, 8, 8]))).unwrap();
        let plain = bound.predict(&x, 3, None).unwrap();
        assert_eq!(guided, plain);
        let other = bound.predict(&x, 3, Some(&random(&[3, 8, 8], &mut rng))).unwrap();
        assert!(other.max_abs_diff(&plain) > 0.0);
    }

    #[test]
    fn timestep_changes_prediction() {
        let mut rng = RngStream::new(2);
        let mut store = ParamStore::new();
        let net = UNet::new(&mut store, "u", small(0), &mut rng).unwrap();
        let x = random(&[2, 8, 8], &mut rng);
        let bound = BoundUNet { net: &net, store: &store };
        let a = bound.predict(&x, 1, None).unwrap();
        let b = bound.predict(&x, 9, None).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0);
    }

    #[test]
    fn shape_errors_name_the_problem() {
        let mut rng = RngStream::new(3);
        let mut store = ParamStore::<f64>::new();
        let net = UNet::new(&mut store, "u", small(0), &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(&[2, 6, 6]));
        let err = net.forward(&mut g, x, 1, None).err().unwrap().to_string();
        assert!(err.contains("level 3"), "{err}");
        let k = g.input(Tensor::zeros(&[3, 8, 8]));
        let y = g.input(Tensor::zeros(&[2, 8, 8]));
        assert!(net.forward(&mut g, y, 1, Some(k)).is_err());
        assert!(UNet::new(&mut store, "v", UNetConfig { depth: 1, ..small(0) }, &mut rng).is_err());
        assert!(UNet::new(&mut store, "w", UNetConfig { attention_levels: vec![4], ..small(2) }, &mut rng).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let build = || {
            let mut rng = RngStream::new(4);
            let mut store = ParamStore::<f32>::new();
            let net = UNet::new(&mut store, "u", small(3), &mut rng).unwrap();
            let x = random(&[2, 8, 8], &mut rng).cast::<f32>();
            let k = random(&[3, 8, 8], &mut rng).cast::<f32>();
            BoundUNet { net: &net, store: &store }.predict(&x, 5, Some(&k)).unwrap()
        };
        assert_eq!(build(), build());
    }
}
