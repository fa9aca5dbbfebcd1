//! Adam with decoupled weight decay, and parameter EMA.

use ndarray::Array2;

use crate::error::{ensure, Result};
use crate::nn::{Gradients, ParamStore};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    /// Moment buffers shaped like `template`.
    pub fn new(template: ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Array2<f64>> = template.iter().map(|(_, v)| Array2::zeros(v.raw_dim())).collect();
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update followed by `p -= lr·wd·p`. Parameters
    /// without a gradient see a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        ensure!(store.len() == self.m.len(), Shape, "optimizer built for {} tensors, store has {}", self.m.len(), store.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let p = store.value_mut(id);
            if let Some(g) = grads.get(id) {
                ensure!(g.shape() == p.shape(), Shape, "gradient shape {:?} vs {:?}", g.shape(), p.shape());
                let (b1, b2) = (self.beta1, self.beta2);
                self.m[i].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
                self.v[i].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            } else {
                self.m[i] *= self.beta1;
                self.v[i] *= self.beta2;
            }
            let (lr, eps, decay) = (self.lr, self.eps, self.lr * self.weight_decay);
            ndarray::Zip::from(&mut *p).and(&self.m[i]).and(&self.v[i]).for_each(|p, &m, &v| {
                let update = (m / bc1) / ((v / bc2).sqrt() + eps);
                *p -= lr * update + decay * *p;
            });
        }
        Ok(())
    }
}

/// Exponential moving average of parameters.
#[derive(Debug, Clone)]
pub struct Ema {
    pub decay: f64,
    pub shadow: ParamStore,
}

impl Ema {
    pub fn new(initial: ParamStore, decay: f64) -> Self {
        Ema { decay, shadow: initial }
    }

    /// `shadow <- decay·shadow + (1 - decay)·params`.
    pub fn update(&mut self, params: &ParamStore) -> Result<()> {
        ensure!(params.len() == self.shadow.len(), Shape, "EMA shadow and parameters differ in length");
        let d = self.decay;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let p = params.value(id);
            let s = self.shadow.value_mut(id);
            ensure!(s.shape() == p.shape(), Shape, "EMA shape mismatch for {}", params.name(id));
            s.zip_mut_with(p, |s, &p| *s = d * *s + (1.0 - d) * p);
        }
        Ok(())
    }
}
