//! Per-time-step scale-only batch normalization.
//!
//! Each time step owns its own scale vector and its own running statistics,
//! so the normalization can re-weight the input current differently along
//! the temporal axis. There is no shift term.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;
use crate::Tensor64;

#[derive(Debug, Clone)]
pub struct BnttLayer {
    /// [T, C] scale parameters.
    pub gamma: Tensor64,
    /// [T, C] running means (exponential moving average of batch means).
    pub running_mean: Tensor64,
    /// [T, C] running variances (EMA of population batch variances).
    pub running_var: Tensor64,
    pub eps: f64,
    pub momentum: f64,
    pub time_steps: usize,
    pub channels: usize,
}

/// Batch statistics used by one training-mode application, kept for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct BnttCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnttLayer {
    pub fn new(time_steps: usize, channels: usize) -> Result<Self> {
        if time_steps == 0 || channels == 0 {
            return Err(Error::invalid("bntt", "time_steps and channels must be positive"));
        }
        Ok(BnttLayer {
            gamma: Tensor::filled(&[time_steps, channels], 1.0),
            running_mean: Tensor::zeros(&[time_steps, channels]),
            running_var: Tensor::filled(&[time_steps, channels], 1.0),
            eps: 1e-5,
            momentum: 0.1,
            time_steps,
            channels,
        })
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.time_steps {
            return Err(Error::invalid(
                "bntt",
                format!("time step {} out of range ({} configured)", t, self.time_steps),
            ));
        }
        Ok(())
    }

    fn check_channels(&self, x: &Tensor64) -> Result<()> {
        let c = match x.shape() {
            [_, c] => *c,
            [_, c, _, _] => *c,
            other => {
                return Err(Error::shape("bntt", format!("need [N,C] or [N,C,H,W], got {:?}", other)))
            }
        };
        if c != self.channels {
            return Err(Error::shape(
                "bntt",
                format!("{} channels vs {} configured", c, self.channels),
            ));
        }
        Ok(())
    }

    pub fn gamma_row(&self, t: usize) -> &[f64] {
        &self.gamma.data()[t * self.channels..(t + 1) * self.channels]
    }

    pub fn running_mean_row(&self, t: usize) -> &[f64] {
        &self.running_mean.data()[t * self.channels..(t + 1) * self.channels]
    }

    pub fn running_var_row(&self, t: usize) -> &[f64] {
        &self.running_var.data()[t * self.channels..(t + 1) * self.channels]
    }

    /// Training-mode application at time step `t`: normalizes with batch
    /// statistics, scales by gamma, and folds the batch statistics into the
    /// running averages.
    pub fn forward_train(&mut self, x: &Tensor64, t: usize) -> Result<(Tensor64, BnttCache)> {
        self.check_step(t)?;
        self.check_channels(x)?;
        let (mean, var, _count) = kernels::channel_stats(x)?;
        let y = kernels::bn_scale_forward(x, self.gamma_row(t), &mean, &var, self.eps)?;
        let m = self.momentum;
        let base = t * self.channels;
        for c in 0..self.channels {
            let rm = &mut self.running_mean.data_mut()[base + c];
            *rm = (1.0 - m) * *rm + m * mean[c];
        }
        for c in 0..self.channels {
            let rv = &mut self.running_var.data_mut()[base + c];
            *rv = (1.0 - m) * *rv + m * var[c];
        }
        Ok((y, BnttCache { mean, var }))
    }

    /// Inference-mode application at time step `t` using running statistics.
    pub fn forward_eval(&self, x: &Tensor64, t: usize) -> Result<Tensor64> {
        self.check_step(t)?;
        self.check_channels(x)?;
        kernels::bn_scale_forward(
            x,
            self.gamma_row(t),
            self.running_mean_row(t),
            self.running_var_row(t),
            self.eps,
        )
    }
}
