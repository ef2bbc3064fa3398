//! Backpropagation versus central finite differences over every real
//! coordinate of the parameters and inputs of a scalar-loss graph.

use kcdm_core::numerics::{finite_diff_real, max_relative_error};
use kcdm_core::Result;

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max over coordinates of `|a - n| / max(|a|, |n|, 1e-6)`.
    pub max_relative_error: f64,
    /// The same maximum over coordinates whose discrepancy `|a - n|`
    /// exceeds [`Self::noise_bound`].
    pub max_resolved_relative_error: f64,
    /// Round-off bound of a central difference: 16 ulps of the loss over
    /// `2·step`. Smaller discrepancies are indistinguishable from exact.
    pub noise_bound: f64,
    pub coordinates: usize,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_resolved_relative_error <= tol
    }
}

fn flatten(store: &ParamStore<f64>, inputs: &[Tensor<f64>]) -> Vec<f64> {
    let mut x = Vec::new();
    for (_, _, t) in store.iter() {
        x.extend_from_slice(&t.re);
        x.extend_from_slice(&t.im);
    }
    for t in inputs {
        x.extend_from_slice(&t.re);
        x.extend_from_slice(&t.im);
    }
    x
}

fn unflatten(x: &[f64], store: &mut ParamStore<f64>, inputs: &mut [Tensor<f64>]) {
    let mut off = 0;
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    let mut fill = |t: &mut Tensor<f64>| {
        let n = t.len();
        t.re.copy_from_slice(&x[off..off + n]);
        t.im.copy_from_slice(&x[off + n..off + 2 * n]);
        off += 2 * n;
    };
    for id in ids {
        fill(store.get_mut(id));
    }
    for t in inputs.iter_mut() {
        fill(t);
    }
}

/// Compares the gradient of `build`'s scalar loss with respect to all
/// parameters in `store` and all `inputs` against central differences.
pub fn check_gradients<B>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], step: f64, build: B) -> Result<GradCheckReport>
where
    B: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let (analytic, numeric, loss) = gradient_pairs(store, inputs, step, build)?;
    Ok(compare(&analytic, &numeric, loss, step))
}

fn compare(analytic: &[f64], numeric: &[f64], loss: f64, step: f64) -> GradCheckReport {
    let noise_bound = 16.0 * f64::EPSILON * loss.abs().max(1.0) / (2.0 * step);
    let (resolved_a, resolved_n): (Vec<f64>, Vec<f64>) = analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| (*a - *n).abs() > noise_bound)
        .unzip();
    GradCheckReport {
        max_relative_error: max_relative_error(analytic, numeric, 1e-6),
        max_resolved_relative_error: max_relative_error(&resolved_a, &resolved_n, 1e-6),
        noise_bound,
        coordinates: analytic.len(),
        loss,
    }
}

/// Backpropagated and central-difference gradients over every real
/// coordinate (parameters first, in store order, then inputs), and the loss.
pub fn gradient_pairs<B>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], step: f64, build: B) -> Result<(Vec<f64>, Vec<f64>, f64)>
where
    B: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let loss_value = g.value(loss).re[0];
    let bw = g.backward(loss)?;
    let mut analytic = Vec::new();
    for (id, _, t) in store.iter() {
        match bw.params().get(id) {
            Some(gt) => {
                analytic.extend_from_slice(&gt.re);
                analytic.extend_from_slice(&gt.im);
            }
            None => analytic.extend(std::iter::repeat_n(0.0, 2 * t.len())),
        }
    }
    for (v, t) in vars.iter().zip(inputs) {
        match bw.of(*v) {
            Some(gt) => {
                analytic.extend_from_slice(&gt.re);
                analytic.extend_from_slice(&gt.im);
            }
            None => analytic.extend(std::iter::repeat_n(0.0, 2 * t.len())),
        }
    }

    let x0 = flatten(store, inputs);
    let mut probe_store = store.clone();
    let mut probe_inputs = inputs.to_vec();
    let mut failure = None;
    let numeric = finite_diff_real(
        |x| {
            unflatten(x, &mut probe_store, &mut probe_inputs);
            let mut g = Graph::new(&probe_store);
            let vars: Vec<Var> = probe_inputs.iter().map(|t| g.input(t.clone())).collect();
            match build(&mut g, &vars) {
                Ok(l) => g.value(l).re[0],
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &x0,
        step,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((analytic, numeric, loss_value))
}
