//! Analog-to-spiking conversion by layer-wise threshold balancing.
//!
//! Weights are copied unchanged. Firing thresholds are set layer by layer,
//! input side first: with all earlier thresholds already final, the network
//! runs on rate-coded calibration inputs and the threshold of the next
//! spiking stage becomes the maximum pre-activation observed across every
//! sample, time step, and tensor element, optionally scaled by `rho`.
//! The converted network integrates without leak.

use crate::error::{Error, Result};
use crate::dataset::Dataset;
use crate::kernels;
use crate::rng;
use crate::snn::{poisson_encode, Layer, LayerSpec, Network, NetworkConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct ConversionOptions {
    /// Time steps used in the calibration scan.
    pub time_steps: usize,
    /// Threshold scale applied after the scan.
    pub rho: f64,
    /// Number of calibration samples drawn from the dataset.
    pub calibration: usize,
    pub seed: u64,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        ConversionOptions { time_steps: 100, rho: 1.0, calibration: 512, seed: 0 }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ScanRecord {
    /// Layer index of the spiking stage in the converted network.
    pub layer: usize,
    /// Position among the spiking stages (input side = 0).
    pub lif_position: usize,
    pub max_pre_activation: f64,
    pub threshold: f64,
}

pub struct ConversionOutcome {
    pub network: Network,
    pub scan: Vec<ScanRecord>,
}

pub fn convert_ann_to_snn(
    ann: &Network,
    calibration: &Dataset,
    opts: &ConversionOptions,
) -> Result<ConversionOutcome> {
    if opts.time_steps == 0 {
        return Err(Error::invalid("convert", "time_steps must be positive"));
    }
    if !(opts.rho.is_finite() && opts.rho > 0.0) {
        return Err(Error::invalid("convert", format!("rho {} must be positive", opts.rho)));
    }
    if opts.calibration == 0 {
        return Err(Error::invalid("convert", "calibration sample count must be positive"));
    }
    if calibration.images.is_empty() {
        return Err(Error::Dataset("empty calibration dataset".to_string()));
    }

    // Map the analog config: Relu becomes a leak-free LIF stage with a
    // placeholder threshold; everything else carries over.
    let mut layers = Vec::with_capacity(ann.config.layers.len());
    for spec in &ann.config.layers {
        layers.push(match spec {
            LayerSpec::Relu => LayerSpec::Lif { leak: 1.0, threshold: 1.0 },
            LayerSpec::Bntt | LayerSpec::Lif { .. } => {
                return Err(Error::invalid("convert", "source network must be analog"))
            }
            other => other.clone(),
        });
    }
    let config = NetworkConfig {
        input: ann.config.input,
        classes: ann.config.classes,
        time_steps: opts.time_steps,
        beta: ann.config.beta,
        init_seed: ann.config.init_seed,
        layers,
    };
    let mut snn = Network::new(config)?;

    // Copy weights position by position (the mapping preserves indices).
    for (i, src) in ann.layers.iter().enumerate() {
        match (src, &mut snn.layers[i]) {
            (
                Layer::Conv { weight, bias, .. },
                Layer::Conv { weight: dw, bias: db, .. },
            ) => {
                *dw = weight.clone();
                *db = bias.clone();
            }
            (Layer::Linear { weight, bias }, Layer::Linear { weight: dw, bias: db }) => {
                *dw = weight.clone();
                *db = bias.clone();
            }
            _ => {}
        }
    }

    // Deterministic calibration subset.
    let count = opts.calibration.min(calibration.images.len());
    let mut order: Vec<usize> = (0..calibration.images.len()).collect();
    shuffle(&mut order, opts.seed);
    let subset = &order[..count];

    let lif_indices = snn.lif_indices();
    let mut scan = Vec::with_capacity(lif_indices.len());
    for (pos, &li) in lif_indices.iter().enumerate() {
        let mut max_pre = f64::NEG_INFINITY;
        for &img_idx in subset {
            let image = &calibration.images[img_idx];
            let train = poisson_encode(
                &image.pixels,
                opts.time_steps,
                rng::derive_seed(opts.seed, &[0x43414c49, img_idx as u64]),
            )?;
            let m = max_pre_activation(&snn, &train, li)?;
            if m > max_pre {
                max_pre = m;
            }
        }
        if !(max_pre > 0.0) {
            return Err(Error::DegenerateThreshold { layer: li, value: max_pre });
        }
        let threshold = opts.rho * max_pre;
        if let Layer::Lif(p) = &mut snn.layers[li] {
            p.threshold = threshold;
        }
        if let LayerSpec::Lif { threshold: th, .. } = &mut snn.config.layers[li] {
            *th = threshold;
        }
        scan.push(ScanRecord { layer: li, lif_position: pos, max_pre_activation: max_pre, threshold });
    }

    Ok(ConversionOutcome { network: snn, scan })
}

/// Runs the converted network prefix `[0, lif_layer)` over one spike train
/// and returns the largest pre-activation entering the target stage.
fn max_pre_activation(
    net: &Network,
    train: &crate::snn::SpikeTrain,
    lif_layer: usize,
) -> Result<f64> {
    let lif_indices = net.lif_indices();
    let mut potentials: Vec<Option<crate::Tensor64>> = vec![None; lif_indices.len()];
    let lif_pos: Vec<Option<usize>> = {
        let mut v = vec![None; net.layers.len()];
        for (pos, &idx) in lif_indices.iter().enumerate() {
            v[idx] = Some(pos);
        }
        v
    };
    let shape = train.frame_shape().to_vec();
    let mut max_pre = f64::NEG_INFINITY;
    for t in 0..train.time_steps() {
        let mut x = train.frame(t).reshaped(&[1, shape[0], shape[1], shape[2]])?;
        for (i, layer) in net.layers.iter().enumerate() {
            if i == lif_layer {
                break;
            }
            x = match layer {
                Layer::Conv { weight, bias, stride, padding } => {
                    kernels::conv2d_forward(&x, weight, bias.as_ref(), *stride, *padding)?
                }
                Layer::Linear { weight, bias } => {
                    kernels::linear_forward(&x, weight, bias.as_ref())?
                }
                Layer::AvgPool { kernel } => kernels::avgpool2d_forward(&x, *kernel)?,
                Layer::Flatten => kernels::flatten_batch(&x)?,
                Layer::Dropout { .. } => x,
                Layer::Lif(params) => {
                    let pos = lif_pos[i].expect("lif position");
                    let u_prev = match &potentials[pos] {
                        Some(u) => u.clone(),
                        None => Tensor::zeros(x.shape()),
                    };
                    let (o, u_new) = crate::snn::lif_step(&u_prev, &x, params)?;
                    potentials[pos] = Some(u_new);
                    o
                }
                Layer::Output => x,
                Layer::Relu | Layer::Bntt(_) => {
                    return Err(Error::invalid("convert", "unexpected layer in converted network"))
                }
            };
        }
        if let Some(m) = x.max_value() {
            if m > max_pre {
                max_pre = m;
            }
        }
    }
    Ok(max_pre)
}

fn shuffle(indices: &mut [usize], seed: u64) {
    use rand::seq::SliceRandom;
    let mut rng = rng::stream_rng(seed, &[0x53484646]);
    indices.shuffle(&mut rng);
}
