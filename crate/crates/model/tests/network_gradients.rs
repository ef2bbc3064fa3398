use kcdm_core::numerics::RngStream;
use kcdm_core::Result;
use kcdm_model::cafe::{Cafe, CafeConfig};
use kcdm_model::kcdm::Kcdm;
use kcdm_model::skem::{Skem, SkemConfig};
use kcdm_model::unet::{UNet, UNetConfig};
use kcdm_nn::{check_gradients, Graph, ParamStore, Tensor, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    Tensor::from_parts(dims, (0..n).map(|_| rng.normal()).collect(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Perturbs every parameter so zero-initialized biases take realistic values.
fn jitter(store: &mut ParamStore<f64>, rng: &mut RngStream) {
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        let t = store.get_mut(id);
        for v in t.re.iter_mut().chain(t.im.iter_mut()) {
            *v += 0.1 * rng.normal();
        }
    }
}

fn assert_ok(name: &str, seed: u64, store: &ParamStore<f64>, inputs: &[Tensor<f64>], build: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>) {
    let r = check_gradients(store, inputs, STEP, build).unwrap();
    assert!(r.loss.is_finite());
    assert!(r.passes(TOL), "{name} seed {seed}: {r:?}");
}

#[test]
fn knowledge_network() {
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let cfg = SkemConfig { hidden: 2, ..SkemConfig::new(2, 2) };
        let skem = Skem::new(&mut store, "skem", cfg, &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let x = random(&[2, 8, 8], &mut rng);
        let target = random(&[2, 8, 8], &mut rng);
        assert_ok("skem", seed, &store, &[x, target], |g, v| {
            let y = skem.forward(g, v[0])?;
            g.mse(y, v[1])
        });
    }
}

#[test]
fn guided_unet_depth_two() {
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let cfg = UNetConfig {
            depth: 2,
            base_channels: 2,
            attention_levels: vec![1, 2],
            attn_dim: 2,
            norm_groups: 1,
            time_embed_dim: 4,
            ..UNetConfig::new(1, 2)
        };
        let unet = UNet::new(&mut store, "kcdm", cfg, &mut rng).unwrap();
        let skem = Skem::new(&mut store, "skem", SkemConfig { hidden: 1, ..SkemConfig::new(2, 2) }, &mut rng).unwrap();
        let model = Kcdm { unet, skem: Some(skem) };
        jitter(&mut store, &mut rng);
        let (x, high, eps) = (random(&[1, 4, 4], &mut rng), random(&[2, 4, 4], &mut rng), random(&[1, 4, 4], &mut rng));
        assert_ok("unet", seed, &store, &[x, high, eps], |g, v| {
            let out = model.forward(g, v[0], 3, Some(v[1]))?;
            g.mse(out.eps, v[2])
        });
    }
}

#[test]
fn enhancement_module_one_level() {
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let cfg = CafeConfig {
            embed: 1,
            attn_dim: 1,
            out_channels: 2,
            ..CafeConfig::new(1, 1)
        };
        let cafe = Cafe::new(&mut store, "cafe", cfg, &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let mut inputs: Vec<Tensor<f64>> = (0..8).map(|_| random(&[1, 8, 8], &mut rng)).collect();
        inputs.push(random(&[2, 8, 8], &mut rng));
        assert_ok("cafe", seed, &store, &inputs, |g, v| {
            let y = cafe.forward(g, &[v[..8].to_vec()])?;
            g.mse(y, v[8])
        });
    }
}
