use kcdm_core::numerics::RngStream;
use kcdm_core::Result;
use kcdm_nn::{
    check_gradients, ComplexConv, ConvSpec, CrossAttention, DepthwiseSeparable, Graph, ParamStore, Tensor, Var,
    IGNORE_LABEL,
};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn random(dims: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let re = (0..n).map(|_| rng.normal()).collect();
    let im = (0..n).map(|_| rng.normal()).collect();
    Tensor::from_parts(dims, re, im).unwrap()
}

/// Loss `mean |out - target|²` against the last input.
fn mse_last(g: &mut Graph<'_, f64>, out: Var, vars: &[Var]) -> Result<Var> {
    g.mse(out, *vars.last().unwrap())
}

fn assert_ok(name: &str, seed: u64, store: &ParamStore<f64>, inputs: &[Tensor<f64>], build: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>) {
    let r = check_gradients(store, inputs, STEP, build).unwrap();
    assert!(r.loss.is_finite());
    assert!(r.passes(TOL), "{name} seed {seed}: {r:?}");
}

#[test]
fn conv_variants() {
    let specs = [
        ((3, 3), ConvSpec::default()),
        ((1, 1), ConvSpec::default()),
        ((3, 3), ConvSpec::strided(2)),
        ((3, 3), ConvSpec::dilated(2)),
        ((1, 3), ConvSpec::default()),
        ((3, 1), ConvSpec::default()),
        ((3, 3), ConvSpec::grouped(2)),
        ((3, 3), ConvSpec::valid()),
    ];
    for seed in SEEDS {
        for (k, spec) in specs {
            let mut rng = RngStream::new(seed);
            let mut store = ParamStore::new();
            let conv = ComplexConv::new(&mut store, "c", 2, 4, k, spec, true, &mut rng).unwrap();
            // Non-zero bias so its gradient path is exercised with realistic values.
            *store.get_mut(conv.bias.unwrap()) = random(&[4, 1, 1], &mut rng);
            let x = random(&[2, 6, 6], &mut rng);
            let out_dims = {
                let mut g = Graph::new(&store);
                let xv = g.input(x.clone());
                let y = conv.forward(&mut g, xv).unwrap();
                g.value(y).dims().to_vec()
            };
            let target = random(&out_dims, &mut rng);
            assert_ok(&format!("conv {spec:?}"), seed, &store, &[x, target], |g, v| {
                let y = conv.forward(g, v[0])?;
                mse_last(g, y, v)
            });
        }
    }
}

#[test]
fn elementwise_ops() {
    let empty = ParamStore::new();
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let (a, b, t) = (random(&[2, 3, 3], &mut rng), random(&[2, 3, 3], &mut rng), random(&[2, 3, 3], &mut rng));
        let inputs = [a, b, t];
        assert_ok("add", seed, &empty, &inputs, |g, v| {
            let y = g.add(v[0], v[1])?;
            mse_last(g, y, v)
        });
        assert_ok("sub", seed, &empty, &inputs, |g, v| {
            let y = g.sub(v[0], v[1])?;
            mse_last(g, y, v)
        });
        assert_ok("mul", seed, &empty, &inputs, |g, v| {
            let y = g.mul(v[0], v[1])?;
            mse_last(g, y, v)
        });
        assert_ok("scale", seed, &empty, &inputs, |g, v| {
            let y = g.scale(v[0], -1.7);
            mse_last(g, y, v)
        });
        assert_ok("crelu", seed, &empty, &inputs, |g, v| {
            let y = g.crelu(v[0]);
            mse_last(g, y, v)
        });
        assert_ok("sq_mod_mean", seed, &empty, &inputs, |g, v| {
            let y = g.mul(v[0], v[1])?;
            Ok(g.sq_mod_mean(y))
        });
    }
}

#[test]
fn shape_ops() {
    let empty = ParamStore::new();
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let (a, b) = (random(&[2, 4, 4], &mut rng), random(&[3, 4, 4], &mut rng));
        let t_cat = random(&[5, 4, 4], &mut rng);
        assert_ok("concat", seed, &empty, &[a.clone(), b, t_cat], |g, v| {
            let y = g.concat(&[v[0], v[1]])?;
            mse_last(g, y, v)
        });
        let t_up = random(&[2, 8, 8], &mut rng);
        assert_ok("upsample2", seed, &empty, &[a.clone(), t_up], |g, v| {
            let y = g.upsample2(v[0]);
            mse_last(g, y, v)
        });
        let t_pool = random(&[2, 2, 2], &mut rng);
        assert_ok("avg_pool2", seed, &empty, &[a.clone(), t_pool], |g, v| {
            let y = g.avg_pool2(v[0])?;
            mse_last(g, y, v)
        });
        let bias = random(&[2, 1, 1], &mut rng);
        let t = random(&[2, 4, 4], &mut rng);
        let inputs = [a, bias, t];
        assert_ok("channel_bias", seed, &empty, &inputs, |g, v| {
            let y = g.channel_bias(v[0], v[1])?;
            mse_last(g, y, v)
        });
        assert_ok("real_bias_both", seed, &empty, &inputs, |g, v| {
            let y = g.real_bias_both(v[0], v[1])?;
            mse_last(g, y, v)
        });
    }
}

#[test]
fn group_norm() {
    let empty = ParamStore::new();
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let x = random(&[4, 3, 3], &mut rng);
        let t = random(&[4, 3, 3], &mut rng);
        for groups in [1, 2, 4] {
            assert_ok(&format!("group_norm/{groups}"), seed, &empty, &[x.clone(), t.clone()], |g, v| {
                let y = g.group_norm(v[0], groups, 1e-5)?;
                mse_last(g, y, v)
            });
        }
    }
}

#[test]
fn attention_op_and_layer() {
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let empty = ParamStore::new();
        let q = random(&[3, 2, 2], &mut rng);
        let k = random(&[3, 1, 3], &mut rng);
        let val = random(&[3, 1, 3], &mut rng);
        let t = random(&[3, 2, 2], &mut rng);
        assert_ok("attention", seed, &empty, &[q, k, val, t], |g, v| {
            let y = g.attention(v[0], v[1], v[2])?;
            mse_last(g, y, v)
        });

        let mut store = ParamStore::new();
        let att = CrossAttention::new(&mut store, "att", 2, 3, 4, 2, &mut rng).unwrap();
        let x = random(&[2, 3, 3], &mut rng);
        let ctx = random(&[3, 2, 2], &mut rng);
        let t = random(&[2, 3, 3], &mut rng);
        assert_ok("cross_attention", seed, &store, &[x, ctx, t], |g, v| {
            let y = att.forward(g, v[0], v[1])?;
            mse_last(g, y, v)
        });
    }
}

#[test]
fn depthwise_separable() {
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let layer = DepthwiseSeparable::new(&mut store, "ds", 3, 2, 3, &mut rng).unwrap();
        let x = random(&[3, 5, 5], &mut rng);
        let t = random(&[2, 5, 5], &mut rng);
        assert_ok("depthwise_separable", seed, &store, &[x, t], |g, v| {
            let y = layer.forward(g, v[0])?;
            mse_last(g, y, v)
        });
    }
}

#[test]
fn softmax_cross_entropy() {
    let empty = ParamStore::new();
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let logits = random(&[4, 2, 3], &mut rng);
        let labels = [0u8, 3, IGNORE_LABEL, 1, 2, 2];
        assert_ok("softmax_ce", seed, &empty, &[logits], |g, v| g.softmax_ce(v[0], &labels));
    }
}

#[test]
fn composite_block_with_reused_parameters() {
    // conv -> group norm -> crelu -> conv(shared weights) -> residual.
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let conv = ComplexConv::square(&mut store, "c", 2, 2, 3, &mut rng).unwrap();
        let x = random(&[2, 4, 4], &mut rng);
        let t = random(&[2, 4, 4], &mut rng);
        assert_ok("composite", seed, &store, &[x, t], |g, v| {
            let h = conv.forward(g, v[0])?;
            let h = g.group_norm(h, 1, 1e-5)?;
            let h = g.crelu(h);
            let h = conv.forward(g, h)?;
            let y = g.add(h, v[0])?;
            mse_last(g, y, v)
        });
    }
}
