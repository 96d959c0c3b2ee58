//! Leaky integrate-and-fire dynamics with soft reset.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Tensor64;

/// Parameters of one LIF stage.
///
/// A neuron fires when its *previous* potential strictly exceeds the
/// threshold; the reset subtracts the threshold (soft reset). The output
/// stage integrates with leak 1 and never fires, which is represented by an
/// infinite threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub leak: f64,
    pub threshold: f64,
    pub is_output: bool,
}

impl LifParams {
    pub fn hidden(leak: f64, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&leak) {
            return Err(Error::invalid("lif", format!("leak {} outside [0, 1]", leak)));
        }
        if !(threshold > 0.0) {
            return Err(Error::invalid("lif", format!("threshold {} must be positive", threshold)));
        }
        Ok(LifParams { leak, threshold, is_output: false })
    }

    pub fn output() -> Self {
        LifParams { leak: 1.0, threshold: f64::INFINITY, is_output: true }
    }
}

/// One membrane update. Spikes are emitted from the previous potential,
/// then the new potential takes the leak, the weighted input, and the soft
/// reset. The reset is applied by branch so a never-firing (infinite)
/// threshold cannot produce non-finite values.
///
/// Returns (spikes, new_potential).
pub fn lif_step(
    u_prev: &Tensor64,
    weighted_input: &Tensor64,
    params: &LifParams,
) -> Result<(Tensor64, Tensor64)> {
    if u_prev.shape() != weighted_input.shape() {
        return Err(Error::shape(
            "lif_step",
            format!("{:?} vs {:?}", u_prev.shape(), weighted_input.shape()),
        ));
    }
    let n = u_prev.numel();
    let mut spikes = Vec::with_capacity(n);
    let mut u_new = Vec::with_capacity(n);
    let theta = params.threshold;
    let fires = theta.is_finite() && !params.is_output;
    for i in 0..n {
        let u = u_prev.data()[i];
        let x = weighted_input.data()[i];
        let o = if fires && u > theta { 1.0 } else { 0.0 };
        let mut v = params.leak * u + x;
        if o > 0.0 {
            v -= theta;
        }
        spikes.push(o);
        u_new.push(v);
    }
    let spikes = Tensor::from_vec(u_prev.shape(), spikes)?;
    let u_new = Tensor::from_vec(u_prev.shape(), u_new)?;
    u_new.ensure_finite("lif_step")?;
    Ok((spikes, u_new))
}
