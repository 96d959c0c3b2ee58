//! SGD with momentum and a step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::snn::Network;
use crate::tensor::Tensor;
use crate::Tensor64;

/// v <- momentum * v + (g + weight_decay * w); w <- w - lr * v
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid("sgd", format!("lr {} must be positive", lr)));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid("sgd", format!("momentum {} outside [0, 1)", momentum)));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::invalid("sgd", format!("weight_decay {} must be non-negative", weight_decay)));
        }
        Ok(SgdMomentum { lr, momentum, weight_decay, velocity: Vec::new() })
    }

    pub fn velocity(&self) -> &[Tensor64] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, velocity: Vec<Tensor64>) {
        self.velocity = velocity;
    }

    /// Applies one update. `grads` must align with `net.named_parameters()`.
    pub fn step(&mut self, net: &mut Network, grads: &[(String, Tensor64)]) -> Result<()> {
        let mut params = net.named_parameters_mut();
        if params.len() != grads.len() {
            return Err(Error::invalid(
                "sgd",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::invalid("sgd", "velocity count does not match parameters"));
        }
        for (idx, ((name, param), (gname, grad))) in
            params.iter_mut().zip(grads.iter()).enumerate()
        {
            if name != gname {
                return Err(Error::invalid(
                    "sgd",
                    format!("gradient {} does not match parameter {}", gname, name),
                ));
            }
            if grad.shape() != param.shape() {
                return Err(Error::shape(
                    "sgd",
                    format!("{}: grad {:?} vs param {:?}", name, grad.shape(), param.shape()),
                ));
            }
            let v = &mut self.velocity[idx];
            for i in 0..param.numel() {
                let g = grad.data()[i] + self.weight_decay * param.data()[i];
                let vi = self.momentum * v.data()[i] + g;
                v.data_mut()[i] = vi;
                param.data_mut()[i] -= self.lr * vi;
            }
            param.ensure_finite("sgd")?;
        }
        Ok(())
    }
}

/// Learning rate decays by `factor` at each milestone epoch.
#[derive(Debug, Clone)]
pub struct StepDecay {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl StepDecay {
    pub fn new(base: f64, milestones: Vec<usize>, factor: f64) -> Self {
        StepDecay { base, milestones, factor }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.factor.powi(hits as i32)
    }
}

/// Decay points at 50%, 70%, and 90% of the epoch budget.
pub fn default_milestones(epochs: usize) -> Vec<usize> {
    vec![epochs * 5 / 10, epochs * 7 / 10, epochs * 9 / 10]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{LayerSpec, NetworkConfig};

    fn one_param_net() -> Network {
        let cfg = NetworkConfig {
            input: [1, 1, 1],
            classes: 2,
            time_steps: 1,
            beta: 0.3,
            init_seed: 0,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 2, bias: false },
                LayerSpec::Output,
            ],
        };
        Network::new(cfg).unwrap()
    }

    #[test]
    fn momentum_accumulates_like_the_textbook_formula() {
        let mut net = one_param_net();
        {
            let mut params = net.named_parameters_mut();
            let w = &mut params[0].1;
            w.data_mut()[0] = 1.0;
            w.data_mut()[1] = 1.0;
        }
        let mut opt = SgdMomentum::new(0.1, 0.9, 0.0).unwrap();
        let g = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
        let grads = vec![("layer01.weight".to_string(), g)];
        // step 1: v = 1, w = 1 - 0.1*1 = 0.9
        opt.step(&mut net, &grads).unwrap();
        assert!((net.named_parameters()[0].1.data()[0] - 0.9).abs() < 1e-15);
        // step 2: v = 0.9 + 1 = 1.9, w = 0.9 - 0.19 = 0.71
        opt.step(&mut net, &grads).unwrap();
        assert!((net.named_parameters()[0].1.data()[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut net = one_param_net();
        {
            let mut params = net.named_parameters_mut();
            params[0].1.data_mut()[0] = 2.0;
        }
        let mut opt = SgdMomentum::new(0.1, 0.0, 0.5).unwrap();
        let g = Tensor::zeros(&[2, 1]);
        let grads = vec![("layer01.weight".to_string(), g)];
        opt.step(&mut net, &grads).unwrap();
        // w = 2 - 0.1 * (0 + 0.5*2) = 1.9
        assert!((net.named_parameters()[0].1.data()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let mut net = one_param_net();
        let g = Tensor::zeros(&[2, 1]);
        let grads = vec![("layer99.weight".to_string(), g)];
        let mut opt = SgdMomentum::new(0.1, 0.9, 0.0).unwrap();
        assert!(opt.step(&mut net, &grads).is_err());
    }

    #[test]
    fn step_decay_schedule() {
        let s = StepDecay::new(0.1, default_milestones(20), 0.1);
        assert_eq!(default_milestones(20), vec![10, 14, 18]);
        assert!((s.lr_at(0) - 0.1).abs() < 1e-15);
        assert!((s.lr_at(9) - 0.1).abs() < 1e-15);
        assert!((s.lr_at(10) - 0.01).abs() < 1e-15);
        assert!((s.lr_at(14) - 0.001).abs() < 1e-15);
        assert!((s.lr_at(19) - 0.0001).abs() < 1e-15);
    }
}
