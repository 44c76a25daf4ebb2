use crate::model::{ModelParams, Scalar};

/// AdamW with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(like: &ModelParams<T>, weight_decay: f64) -> Self {
        let zeros = ModelParams::zeros(like.config.clone()).expect("config already validated");
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        let decay = T::of(1.0 - lr * self.weight_decay);
        let g = grads.tensors();
        let params_t = params.tensors_mut();
        let m_t = self.m.tensors_mut();
        let v_t = self.v.tensors_mut();
        for ((((_, p), (_, m)), (_, v)), (_, _, g)) in params_t.into_iter().zip(m_t).zip(v_t).zip(g) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                p[i] = p[i] * decay - step * m[i] / denom;
            }
        }
    }
}

/// Global L2 norm of all gradient tensors.
pub fn grad_norm<T: Scalar>(grads: &ModelParams<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, _, d)| d.iter())
        .map(|v| {
            let f = v.f64();
            f * f
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        for (_, t) in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

pub fn zero_grads<T: Scalar>(grads: &mut ModelParams<T>) {
    for (_, t) in grads.tensors_mut() {
        t.fill(T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelConfig {
        ModelConfig { hidden_size: 2, embed_size: 2, attention_size: 2, vocab_size: 10, ..ModelConfig::default() }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = ModelParams::<f64>::zeros(tiny()).unwrap();
        let mut g = p.clone();
        g.embed[[3, 1]] = 0.5;
        g.embed[[4, 0]] = -2.0;
        let mut opt = AdamW::new(&p, 0.0);
        opt.update(&mut p, &g, 0.01);
        assert!((p.embed[[3, 1]] + 0.01).abs() < 1e-9);
        assert!((p.embed[[4, 0]] - 0.01).abs() < 1e-9);
        assert_eq!(p.embed[[0, 0]], 0.0);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = ModelParams::<f64>::zeros(tiny()).unwrap();
        p.embed[[2, 0]] = 1.0;
        let g = ModelParams::<f64>::zeros(tiny()).unwrap();
        let mut opt = AdamW::new(&p, 0.1);
        opt.update(&mut p, &g, 0.5);
        assert!((p.embed[[2, 0]] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = ModelParams::<f64>::zeros(tiny()).unwrap();
        g.embed[[0, 0]] = 3.0;
        g.embed[[0, 1]] = 4.0;
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((grad_norm(&g) - 1.0).abs() < 1e-12);
        assert_eq!(clip_grad_norm(&mut g, 5.0), grad_norm(&g));
    }
}
