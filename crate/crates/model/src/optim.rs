//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::tape::{Grads, Mat, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    #[serde(skip)]
    m: Vec<Mat>,
    #[serde(skip)]
    v: Vec<Mat>,
}

impl AdamW {
    pub fn new(params: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|(_, _, p)| Mat::zeros(p.raw_dim())).collect::<Vec<_>>();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// `θ ← θ - lr·(m̂ / (√v̂ + eps) + wd·θ)`.
    pub fn update(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for (((p, g), m), v) in params.values_mut().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let step = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                *p -= lr * (step + wd * *p);
            });
        }
    }

    /// Moment buffers for checkpointing.
    pub fn moments(&self) -> (&[Mat], &[Mat]) {
        (&self.m, &self.v)
    }

    pub fn set_moments(&mut self, m: Vec<Mat>, v: Vec<Mat>) {
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Minimizes `½ Σ (x - c)²` with hand-rolled Adam as the reference.
    #[test]
    fn zero_decay_matches_plain_adam_on_quadratic() {
        let c = array![[3.0, -1.0, 0.5]];
        let mut store = ParamStore::default();
        let id = store.add("x", Mat::zeros((1, 3)));
        let mut opt = AdamW::new(&store, 0.1, 0.9, 0.999, 1e-8, 0.0);

        let mut x = [0.0f64; 3];
        let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
        for t in 1..=200 {
            let grad = store.get(id) - &c;
            opt.update(&mut store, &Grads(vec![grad]));
            for i in 0..3 {
                let g = x[i] - c[[0, i]];
                m[i] = 0.9 * m[i] + 0.1 * g;
                v[i] = 0.999 * v[i] + 0.001 * g * g;
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let vh = v[i] / (1.0 - 0.999f64.powi(t));
                x[i] -= 0.1 * mh / (vh.sqrt() + 1e-8);
            }
            for i in 0..3 {
                assert!((store.get(id)[[0, i]] - x[i]).abs() < 1e-12);
            }
        }
        for i in 0..3 {
            assert!((x[i] - c[[0, i]]).abs() < 0.05);
        }
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let mut store = ParamStore::default();
        let id = store.add("x", array![[2.0]]);
        let mut opt = AdamW::new(&store, 0.1, 0.9, 0.999, 1e-8, 0.5);
        opt.update(&mut store, &Grads(vec![Mat::zeros((1, 1))]));
        assert!((store.get(id)[[0, 0]] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut store = ParamStore::default();
        store.add("x", array![[2.0, -1.0]]);
        let before = store.clone();
        let mut opt = AdamW::new(&store, 0.0, 0.9, 0.999, 1e-8, 0.1);
        opt.update(&mut store, &Grads(vec![array![[5.0, 3.0]]]));
        assert_eq!(store, before);
    }
}
