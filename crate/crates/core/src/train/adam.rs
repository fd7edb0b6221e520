use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 rate; `λ θ` is added to the gradient before the moment update.
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            decay_factor: 0.1,
            decay_epochs: 3,
        }
    }
}

impl AdamConfig {
    /// `lr · decay_factor^floor(epoch / decay_epochs)`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let k = epoch / self.decay_epochs.max(1);
        self.lr * self.decay_factor.powi(k as i32)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = |p: &Tensor| Tensor::zeros(p.shape());
        Adam {
            config,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update at learning rate `lr`. `grads[i] == None`
    /// is a zero gradient. `names` label parameters in error messages.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>], lr: f64, names: &[&str]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Config(format!(
                "{} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].shape() {
                    return Err(Error::Dimension {
                        op: "adam_step",
                        left: params[i].shape().to_vec(),
                        right: g.shape().to_vec(),
                    });
                }
                if !g.is_finite() {
                    let name = names.get(i).copied().unwrap_or("?");
                    return Err(Error::NonFinite {
                        what: format!("gradient of {name}"),
                    });
                }
            }
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - c.beta1.powi(t);
        let correct2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let g = grads[i].as_ref().map(Tensor::data);
            for (j, theta) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(0.0, |g| g[j]) + c.weight_decay * *theta;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let m_hat = m[j] / correct1;
                let v_hat = v[j] / correct2;
                *theta -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
