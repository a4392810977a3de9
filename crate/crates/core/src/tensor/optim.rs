use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(TensorError::Shape {
                op: "adam",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if !p.same_shape(g) {
                return Err(TensorError::Shape {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(TensorError::NonFinite { op: "adam" });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                let gk = g.data()[k];
                md[k] = beta1 * md[k] + (1.0 - beta1) * gk;
                vd[k] = beta2 * vd[k] + (1.0 - beta2) * gk * gk;
                let mh = md[k] / c1;
                let vh = vd[k] / c2;
                pd[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `fan_in × fan_out` weights uniform in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::matrix(fan_in, fan_out, data).unwrap()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        let mut params = vec![Tensor::row(vec![1.0, 1.0, 1.0])];
        let mut st = AdamState::new(cfg, &params);
        st.step(&mut params, &[Tensor::row(vec![3.0, -0.5, 1e-3])]).unwrap();
        let d = params[0].data();
        assert!((d[0] - 0.99).abs() < 1e-8);
        assert!((d[1] - 1.01).abs() < 1e-8);
        assert!((d[2] - 0.99).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut params = vec![Tensor::row(vec![0.5, -2.0])];
        let before = params.clone();
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params, &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut params = vec![Tensor::row(vec![0.5])];
        let mut st = AdamState::new(AdamConfig::default(), &params);
        assert!(st.step(&mut params, &[Tensor::row(vec![f64::NAN])]).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut params = vec![Tensor::row(vec![0.1, 0.2])];
            let mut st = AdamState::new(AdamConfig::default(), &params);
            for k in 0..10 {
                st.step(&mut params, &[Tensor::row(vec![k as f64 * 0.3, -1.0])]).unwrap();
            }
            params
        };
        let (a, b) = (run(), run());
        assert_eq!(a[0].data()[0].to_bits(), b[0].data()[0].to_bits());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = glorot_uniform(10, 6, &mut rng);
        let a = (6.0f64 / 16.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
        assert_eq!(w.shape(), &[10, 6]);
    }
}
