//! Backpropagation through time for the spiking network, written out by
//! hand with an explicit reverse loop over time steps.
//!
//! Gradient flow per hidden LIF stage: let D_t = dL/du_t. The potential
//! u_t influences u_{t+1} through the leak and the next spike decision
//! o_{t+1} = H(u_t - theta), whose surrogate derivative also gates the soft
//! reset, so
//!
//!   D_t = leak * D_{t+1} + sigma'(u_t) * (Gs_{t+1} - theta * D_{t+1})
//!
//! with D_T = 0, where Gs_t is the gradient arriving at the spike output
//! from downstream layers at step t, and sigma' is the piecewise-linear
//! surrogate evaluated at the potential that produced the spike. The
//! weighted input x_t receives exactly D_t. The output stage accumulates
//! logits with leak 1, so every step's logits receive the same
//! cross-entropy gradient.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernels;
use crate::snn::{DataShape, Layer, Network, SpikeTrain};
use crate::tensor::Tensor;
use crate::Tensor64;

pub struct BpttOutput {
    pub loss: f64,
    /// Gradients aligned with `Network::named_parameters()`.
    pub grads: Vec<(String, Tensor64)>,
    /// Fraction of neurons spiking per LIF stage per time step.
    pub spike_fraction: Vec<Vec<f64>>,
}

struct LifCache {
    /// Potential the spike decision saw (the previous potential).
    u_pre: Vec<Tensor64>,
    spikes: Vec<Tensor64>,
}

/// One training step: forward with batch-statistics normalization (running
/// averages are updated in place), then the reverse sweep. The caller
/// applies the returned gradients through an optimizer.
pub fn bptt_step(net: &mut Network, trains: &[SpikeTrain], labels: &[usize]) -> Result<BpttOutput> {
    if trains.is_empty() {
        return Err(Error::invalid("bptt", "empty batch"));
    }
    if trains.len() != labels.len() {
        return Err(Error::invalid(
            "bptt",
            format!("{} labels for {} spike trains", labels.len(), trains.len()),
        ));
    }
    let time_steps = trains[0].time_steps();
    for tr in trains {
        if tr.time_steps() != time_steps {
            return Err(Error::invalid("bptt", "spike trains differ in length"));
        }
    }
    for layer in &net.layers {
        if matches!(layer, Layer::Relu | Layer::Dropout { .. }) {
            return Err(Error::invalid(
                "bptt",
                "analog activation or dropout in spiking training graph",
            ));
        }
    }

    let n = trains.len();
    let frame_shape = trains[0].frame_shape().to_vec();
    let lif_indices = net.lif_indices();
    let lif_pos: Vec<Option<usize>> = {
        let mut v = vec![None; net.layers.len()];
        for (pos, &li) in lif_indices.iter().enumerate() {
            v[li] = Some(pos);
        }
        v
    };

    // ---- forward ----
    // layer_inputs[i][t]: tensor flowing INTO layer i at step t (only kept
    // for layers whose backward needs it).
    let mut layer_inputs: Vec<Vec<Tensor64>> = vec![Vec::new(); net.layers.len()];
    let mut bntt_stats: Vec<Vec<(Vec<f64>, Vec<f64>)>> = vec![Vec::new(); net.layers.len()];
    let mut lif_caches: Vec<LifCache> = lif_indices
        .iter()
        .map(|_| LifCache { u_pre: Vec::new(), spikes: Vec::new() })
        .collect();
    let mut potentials: Vec<Option<Tensor64>> = vec![None; lif_indices.len()];
    let mut u_out = Tensor::zeros(&[n, net.config.classes]);

    for t in 0..time_steps {
        let per = trains[0].frame(t).numel();
        let mut data = Vec::with_capacity(n * per);
        for tr in trains {
            data.extend_from_slice(tr.frame(t).data());
        }
        let mut x =
            Tensor::from_vec(&[n, frame_shape[0], frame_shape[1], frame_shape[2]], data)?;

        for (i, layer) in net.layers.iter_mut().enumerate() {
            x = match layer {
                Layer::Conv { weight, bias, stride, padding } => {
                    layer_inputs[i].push(x.clone());
                    kernels::conv2d_forward(&x, weight, bias.as_ref(), *stride, *padding)?
                }
                Layer::Linear { weight, bias } => {
                    layer_inputs[i].push(x.clone());
                    kernels::linear_forward(&x, weight, bias.as_ref())?
                }
                Layer::AvgPool { kernel } => kernels::avgpool2d_forward(&x, *kernel)?,
                Layer::Flatten => kernels::flatten_batch(&x)?,
                Layer::Bntt(bn) => {
                    layer_inputs[i].push(x.clone());
                    let (y, cache) = bn.forward_train(&x, t)?;
                    bntt_stats[i].push((cache.mean, cache.var));
                    y
                }
                Layer::Lif(params) => {
                    let pos = lif_pos[i].expect("lif position");
                    let u_prev = match &potentials[pos] {
                        Some(u) => u.clone(),
                        None => Tensor::zeros(x.shape()),
                    };
                    let (o, u_new) = crate::snn::lif_step(&u_prev, &x, params)?;
                    potentials[pos] = Some(u_new);
                    lif_caches[pos].u_pre.push(u_prev);
                    lif_caches[pos].spikes.push(o.clone());
                    o
                }
                Layer::Output => {
                    u_out = u_out.add(&x)?;
                    u_out.clone()
                }
                Layer::Relu | Layer::Dropout { .. } => unreachable!("rejected above"),
            };
        }
    }

    let ce = kernels::softmax_cross_entropy_forward(&u_out, labels).map_err(|e| match e {
        Error::NonFinite { .. } => Error::Diverged(format!(
            "non-finite loss over {} samples at {} steps",
            n, time_steps
        )),
        other => other,
    })?;
    if !ce.loss.is_finite() {
        return Err(Error::Diverged(format!("loss = {}", ce.loss)));
    }

    // ---- backward ----
    let g_out = kernels::softmax_cross_entropy_backward(&ce.probs, labels, 1.0)?;
    let mut grad_acc: BTreeMap<String, Tensor64> = BTreeMap::new();
    let mut carries: Vec<Option<Tensor64>> = vec![None; lif_indices.len()];

    // Input shape of each Flatten layer, resolved once.
    let shapes = net.config.layer_shapes()?;
    let mut flatten_shapes: Vec<Option<Vec<usize>>> = vec![None; net.layers.len()];
    for (i, layer) in net.layers.iter().enumerate() {
        if matches!(layer, Layer::Flatten) {
            let s = if i == 0 {
                vec![n, net.config.input[0], net.config.input[1], net.config.input[2]]
            } else {
                match &shapes[i - 1] {
                    DataShape::Map { channels, height, width } => {
                        vec![n, *channels, *height, *width]
                    }
                    DataShape::Flat { features } => vec![n, *features],
                }
            };
            flatten_shapes[i] = Some(s);
        }
    }

    for t in (0..time_steps).rev() {
        let mut g = g_out.clone();
        for (i, layer) in net.layers.iter().enumerate().rev() {
            g = match layer {
                Layer::Output => g,
                Layer::Linear { weight, bias } => {
                    let input = &layer_inputs[i][t];
                    let lg = kernels::linear_backward(&g, input, weight, bias.is_some())?;
                    accumulate_into(&mut grad_acc, &format!("layer{:02}.weight", i), &lg.weight)?;
                    if let Some(gb) = lg.bias {
                        accumulate_into(&mut grad_acc, &format!("layer{:02}.bias", i), &gb)?;
                    }
                    lg.input
                }
                Layer::Conv { weight, bias, stride, padding } => {
                    let input = &layer_inputs[i][t];
                    let cg = kernels::conv2d_backward(&g, input, weight, bias.is_some(), *stride, *padding)?;
                    accumulate_into(&mut grad_acc, &format!("layer{:02}.weight", i), &cg.kernel)?;
                    if let Some(gb) = cg.bias {
                        accumulate_into(&mut grad_acc, &format!("layer{:02}.bias", i), &gb)?;
                    }
                    cg.input
                }
                Layer::Flatten => {
                    g.reshaped(flatten_shapes[i].as_ref().expect("flatten shape"))?
                }
                Layer::AvgPool { kernel } => {
                    let (oh, ow) = (g.shape()[2] * kernel, g.shape()[3] * kernel);
                    let in_shape = [g.shape()[0], g.shape()[1], oh, ow];
                    kernels::avgpool2d_backward(&g, &in_shape, *kernel)?
                }
                Layer::Bntt(bn) => {
                    let input = &layer_inputs[i][t];
                    let (mean, var) = &bntt_stats[i][t];
                    let bg = kernels::bn_scale_backward_batch(
                        &g,
                        input,
                        bn.gamma_row(t),
                        mean,
                        var,
                        bn.eps,
                    )?;
                    // Gamma gradient lands in row t of the [T, C] tensor.
                    let name = format!("layer{:02}.gamma", i);
                    let entry = grad_acc
                        .entry(name)
                        .or_insert_with(|| Tensor::zeros(bn.gamma.shape()));
                    let base = t * bn.channels;
                    for (c, gv) in bg.gamma.iter().enumerate() {
                        entry.data_mut()[base + c] += gv;
                    }
                    bg.input
                }
                Layer::Lif(params) => {
                    let pos = lif_pos[i].expect("lif position");
                    // g currently holds Gs_t, the downstream gradient at the
                    // spike output of step t.
                    let carry = match &carries[pos] {
                        Some(c) => c.clone(),
                        None => Tensor::zeros(g.shape()),
                    };
                    let u_pre = &lif_caches[pos].u_pre[t];
                    let theta = params.threshold;
                    let beta = net.config.beta;
                    let leak = params.leak;
                    let mut new_carry = Vec::with_capacity(g.numel());
                    for idx in 0..g.numel() {
                        let d_next = carry.data()[idx];
                        let sur = surrogate(u_pre.data()[idx], theta, beta);
                        new_carry
                            .push(leak * d_next + sur * (g.data()[idx] - theta * d_next));
                    }
                    carries[pos] = Some(Tensor::from_vec(g.shape(), new_carry)?);
                    // dL/dx_t is the pre-update carry D_t.
                    carry
                }
                Layer::Relu | Layer::Dropout { .. } => unreachable!("rejected above"),
            };
        }
    }

    // Emit in parameter order.
    let mut grads = Vec::new();
    for (name, param) in net.named_parameters() {
        let g = match grad_acc.remove(&name) {
            Some(g) => g,
            None => Tensor::zeros(param.shape()),
        };
        g.ensure_finite("bptt")?;
        grads.push((name, g));
    }

    let spike_fraction = lif_caches
        .iter()
        .map(|c| c.spikes.iter().map(|s| s.sum() / s.numel() as f64).collect())
        .collect();

    Ok(BpttOutput { loss: ce.loss, grads, spike_fraction })
}

#[inline]
fn surrogate(u: f64, theta: f64, beta: f64) -> f64 {
    if !theta.is_finite() {
        return 0.0;
    }
    let w = 1.0 - (u - theta).abs() / theta;
    if w > 0.0 {
        beta * w
    } else {
        0.0
    }
}

fn accumulate_into(
    acc: &mut BTreeMap<String, Tensor64>,
    name: &str,
    grad: &Tensor64,
) -> Result<()> {
    match acc.get_mut(name) {
        Some(t) => {
            if t.shape() != grad.shape() {
                return Err(Error::shape(
                    "bptt",
                    format!("{}: {:?} vs {:?}", name, t.shape(), grad.shape()),
                ));
            }
            for (a, &b) in t.data_mut().iter_mut().zip(grad.data().iter()) {
                *a += b;
            }
            Ok(())
        }
        None => {
            acc.insert(name.to_string(), grad.clone());
            Ok(())
        }
    }
}
