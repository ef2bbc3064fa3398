use kcdm_core::numerics::Real;
use kcdm_core::{Error, Result};

use crate::params::{Grads, ParamStore};
use crate::tensor::Tensor;

/// Adam over the real and imaginary coordinates of every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients with a larger global norm are rescaled to this norm.
    pub clip_norm: Option<f64>,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, lr: f64) -> Self {
        let zeros: Vec<Tensor<F>> = store.iter().map(|(_, _, t)| Tensor::zeros(t.dims())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, store: &mut ParamStore<F>, grads: &Grads<F>) -> Result<()> {
        if grads.tensors.len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), (store.len(), grads.tensors.len())));
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let n = grads.norm();
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let Some(g) = grads.get(id) else {
                continue;
            };
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let coords = p
                .re
                .iter_mut()
                .zip(&g.re)
                .zip(m.re.iter_mut().zip(v.re.iter_mut()))
                .chain(p.im.iter_mut().zip(&g.im).zip(m.im.iter_mut().zip(v.im.iter_mut())));
            for ((w, gr), (mi, vi)) in coords {
                let gr = gr.as_f64() * scale;
                let mn = b1 * mi.as_f64() + (1.0 - b1) * gr;
                let vn = b2 * vi.as_f64() + (1.0 - b2) * gr * gr;
                *mi = F::of(mn);
                *vi = F::of(vn);
                let upd = self.lr * (mn / c1) / ((vn / c2).sqrt() + self.eps);
                *w = F::of(w.as_f64() - upd);
            }
        }
        Ok(())
    }
}
