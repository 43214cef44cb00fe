use crate::nn::{ParamSet, Real};

/// Adam with global gradient-norm clipping applied before the moment update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }

    pub fn with_max_grad_norm(mut self, max_norm: f64) -> Self {
        self.max_grad_norm = Some(max_norm);
        self
    }

    /// One bias-corrected update of every parameter in `params`.
    /// Returns the gradient norm measured before clipping.
    pub fn step<T: Real>(&self, params: &mut ParamSet<T>) -> f64 {
        let norm = match self.max_grad_norm {
            Some(max) => params.clip_grad_norm(max),
            None => params.grad_norm(),
        };
        let t = params.bump_step() as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let step_size = T::from_f64(self.lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(self.eps);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let (p, g, m, v) = params.moments_mut(id);
            let p = p.data_mut();
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                p[i] = p[i] - step_size * m[i] / denom;
            }
        }
        norm
    }
}
