//! Network runtime: parameters, forward passes, and tape unrolling.

use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::kernels;
use crate::rng;
use crate::tensor::Tensor;
use crate::Tensor64;

use super::bntt::BnttLayer;
use super::config::{DataShape, LayerSpec, NetworkConfig};
use super::encode::SpikeTrain;
use super::lif::{lif_step, LifParams};

#[derive(Debug, Clone)]
pub enum Layer {
    Conv { weight: Tensor64, bias: Option<Tensor64>, stride: usize, padding: usize },
    Linear { weight: Tensor64, bias: Option<Tensor64> },
    AvgPool { kernel: usize },
    Flatten,
    Relu,
    Dropout { p: f64 },
    Bntt(BnttLayer),
    Lif(LifParams),
    Output,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    Disabled,
    /// Binary spike masking with one mask per sample, held fixed across all
    /// time steps. Spikes stay exactly binary.
    Masked { seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub dropout: DropoutMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { dropout: DropoutMode::Disabled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    /// Final potentials and predictions only.
    Output,
    /// Plus binary spike frames for every LIF stage at every step.
    Spikes,
    /// Plus membrane potential snapshots and the output accumulator trace.
    Full,
}

/// Everything observed during one spiking forward pass.
#[derive(Debug, Clone)]
pub struct SpikeRecord {
    pub time_steps: usize,
    /// Input frames [N,C,H,W] per step (recorded unless kind == Output).
    pub input_frames: Vec<Tensor64>,
    /// Layer indices of the LIF stages, in network order.
    pub lif_layers: Vec<usize>,
    /// spikes[l][t]: binary [N,C,H,W] (or [N,F]) output of LIF stage l at step t.
    pub spikes: Vec<Vec<Tensor64>>,
    /// potentials[l][t]: membrane potential after the update at step t (Full only).
    pub potentials: Vec<Vec<Tensor64>>,
    /// Accumulated output potentials after each step (Full only).
    pub output_trace: Vec<Tensor64>,
    /// Final accumulated output potentials [N, classes].
    pub output: Tensor64,
    pub predictions: Vec<usize>,
}

impl SpikeRecord {
    /// Fraction of neurons spiking per LIF stage per step.
    pub fn spike_fraction(&self) -> Vec<Vec<f64>> {
        self.spikes
            .iter()
            .map(|per_t| {
                per_t
                    .iter()
                    .map(|s| if s.numel() == 0 { 0.0 } else { s.sum() / s.numel() as f64 })
                    .collect()
            })
            .collect()
    }
}

/// How the tape unroll feeds input.
pub enum InputNodes {
    /// One leaf per time step.
    PerStep(Vec<NodeId>),
    /// A single leaf reused at every step (expected-rate relaxation).
    Constant(NodeId),
}

#[derive(Debug, Clone, Copy)]
pub struct UnrollMode {
    /// Use batch statistics on the tape (training semantics) instead of the
    /// stored running statistics.
    pub train_stats: bool,
}

/// Handles into an unrolled spiking graph.
pub struct UnrolledNet {
    pub output: NodeId,
    /// spikes[l][t] node ids, aligned with `Network::lif_indices`.
    pub spikes: Vec<Vec<NodeId>>,
    /// Named parameter leaves; BNTT scales appear per step as
    /// "layerNN.gamma.tTTT".
    pub params: Vec<(String, NodeId)>,
}

/// Handles into an analog (non-spiking) graph.
pub struct AnnTaped {
    pub logits: NodeId,
    /// Post-activation node per Relu stage, in order.
    pub relu_nodes: Vec<NodeId>,
    pub params: Vec<(String, NodeId)>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let shapes = config.layer_shapes()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut in_shape = DataShape::Map {
            channels: config.input[0],
            height: config.input[1],
            width: config.input[2],
        };
        for (i, spec) in config.layers.iter().enumerate() {
            let layer = match spec {
                LayerSpec::Conv { out_channels, kernel, stride, padding, bias } => {
                    let in_c = match in_shape {
                        DataShape::Map { channels, .. } => channels,
                        _ => unreachable!("validated by layer_shapes"),
                    };
                    let fan_in = in_c * kernel * kernel;
                    let weight = init_uniform(
                        &[*out_channels, in_c, *kernel, *kernel],
                        fan_in,
                        config.init_seed,
                        i,
                    )?;
                    let bias = if *bias { Some(Tensor::zeros(&[*out_channels])) } else { None };
                    Layer::Conv { weight, bias, stride: *stride, padding: *padding }
                }
                LayerSpec::Linear { out_features, bias } => {
                    let in_f = match in_shape {
                        DataShape::Flat { features } => features,
                        _ => unreachable!("validated by layer_shapes"),
                    };
                    let weight =
                        init_uniform(&[*out_features, in_f], in_f, config.init_seed, i)?;
                    let bias = if *bias { Some(Tensor::zeros(&[*out_features])) } else { None };
                    Layer::Linear { weight, bias }
                }
                LayerSpec::AvgPool { kernel } => Layer::AvgPool { kernel: *kernel },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { p } => Layer::Dropout { p: *p },
                LayerSpec::Bntt => {
                    let channels = in_shape.channels();
                    Layer::Bntt(BnttLayer::new(config.time_steps, channels)?)
                }
                LayerSpec::Lif { leak, threshold } => {
                    Layer::Lif(LifParams::hidden(*leak, *threshold)?)
                }
                LayerSpec::Output => Layer::Output,
            };
            layers.push(layer);
            in_shape = shapes[i].clone();
        }
        Ok(Network { config, layers })
    }

    pub fn lif_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Lif(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor64)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    out.push((format!("layer{:02}.weight", i), weight));
                    if let Some(b) = bias {
                        out.push((format!("layer{:02}.bias", i), b));
                    }
                }
                Layer::Bntt(bn) => out.push((format!("layer{:02}.gamma", i), &bn.gamma)),
                _ => {}
            }
        }
        out
    }

    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor64)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    out.push((format!("layer{:02}.weight", i), weight));
                    if let Some(b) = bias {
                        out.push((format!("layer{:02}.bias", i), b));
                    }
                }
                Layer::Bntt(bn) => out.push((format!("layer{:02}.gamma", i), &mut bn.gamma)),
                _ => {}
            }
        }
        out
    }

    /// Non-trainable state (running statistics).
    pub fn named_buffers(&self) -> Vec<(String, &Tensor64)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Bntt(bn) = layer {
                out.push((format!("layer{:02}.running_mean", i), &bn.running_mean));
                out.push((format!("layer{:02}.running_var", i), &bn.running_var));
            }
        }
        out
    }

    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Tensor64)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::Bntt(bn) = layer {
                out.push((format!("layer{:02}.running_mean", i), &mut bn.running_mean));
                out.push((format!("layer{:02}.running_var", i), &mut bn.running_var));
            }
        }
        out
    }

    /// Sets thresholds for the LIF stages (ordered as `lif_indices`).
    pub fn set_lif_thresholds(&mut self, thresholds: &[f64]) -> Result<()> {
        let idx = self.lif_indices();
        if idx.len() != thresholds.len() {
            return Err(Error::invalid(
                "set_lif_thresholds",
                format!("{} thresholds for {} LIF stages", thresholds.len(), idx.len()),
            ));
        }
        for (&i, &th) in idx.iter().zip(thresholds.iter()) {
            if !(th.is_finite() && th > 0.0) {
                return Err(Error::invalid(
                    "set_lif_thresholds",
                    format!("threshold {} for layer {} must be positive and finite", th, i),
                ));
            }
            if let Layer::Lif(p) = &mut self.layers[i] {
                p.threshold = th;
            }
            if let LayerSpec::Lif { threshold, .. } = &mut self.config.layers[i] {
                *threshold = th;
            }
        }
        Ok(())
    }

    fn dropout_masks(
        &self,
        batch: usize,
        opts: &EvalOptions,
        shapes: &[DataShape],
    ) -> Result<Vec<Option<Tensor64>>> {
        let mut masks: Vec<Option<Tensor64>> = vec![None; self.layers.len()];
        if let DropoutMode::Masked { seed } = opts.dropout {
            for (i, layer) in self.layers.iter().enumerate() {
                if let Layer::Dropout { p } = layer {
                    let shape = match &shapes[i] {
                        DataShape::Map { channels, height, width } => {
                            vec![batch, *channels, *height, *width]
                        }
                        DataShape::Flat { features } => vec![batch, *features],
                    };
                    let mut rng = rng::stream_rng(seed, &[0x44524f50, i as u64]);
                    let numel: usize = shape.iter().product();
                    let mut data = Vec::with_capacity(numel);
                    for _ in 0..numel {
                        let u: f64 = rng.gen();
                        data.push(if u < *p { 0.0 } else { 1.0 });
                    }
                    masks[i] = Some(Tensor::from_vec(&shape, data)?);
                }
            }
        }
        Ok(masks)
    }

    /// Runs the spiking network over a batch of spike trains.
    ///
    /// The number of time steps comes from the trains; a network containing
    /// BNTT stages rejects trains longer than its configured horizon because
    /// each step owns its own statistics.
    pub fn snn_forward(
        &self,
        trains: &[SpikeTrain],
        opts: &EvalOptions,
        record: RecordKind,
    ) -> Result<SpikeRecord> {
        if trains.is_empty() {
            return Err(Error::invalid("snn_forward", "empty batch"));
        }
        let time_steps = trains[0].time_steps();
        let frame_shape = trains[0].frame_shape().to_vec();
        for (i, tr) in trains.iter().enumerate() {
            if tr.time_steps() != time_steps || tr.frame_shape() != frame_shape {
                return Err(Error::shape(
                    "snn_forward",
                    format!("train {} differs in steps or frame shape", i),
                ));
            }
        }
        let expected = [self.config.input[0], self.config.input[1], self.config.input[2]];
        if frame_shape != expected {
            return Err(Error::shape(
                "snn_forward",
                format!("frame shape {:?} vs configured input {:?}", frame_shape, expected),
            ));
        }
        let shapes = self.config.layer_shapes()?;
        let n = trains.len();
        let masks = self.dropout_masks(n, opts, &shapes)?;

        let lif_layers = self.lif_indices();
        let lif_pos: Vec<Option<usize>> = {
            let mut v = vec![None; self.layers.len()];
            for (pos, &li) in lif_layers.iter().enumerate() {
                v[li] = Some(pos);
            }
            v
        };
        let mut potentials: Vec<Tensor64> = lif_layers
            .iter()
            .map(|&li| match &shapes[li] {
                DataShape::Map { channels, height, width } => {
                    Tensor::zeros(&[n, *channels, *height, *width])
                }
                DataShape::Flat { features } => Tensor::zeros(&[n, *features]),
            })
            .collect();
        let mut u_out = Tensor::zeros(&[n, self.config.classes]);

        let keep_frames = record != RecordKind::Output;
        let mut rec = SpikeRecord {
            time_steps,
            input_frames: Vec::new(),
            lif_layers: lif_layers.clone(),
            spikes: vec![Vec::new(); lif_layers.len()],
            potentials: vec![Vec::new(); lif_layers.len()],
            output_trace: Vec::new(),
            output: Tensor::zeros(&[n, self.config.classes]),
            predictions: Vec::new(),
        };

        for t in 0..time_steps {
            // Assemble the batch frame [N,C,H,W].
            let per = trains[0].frame(t).numel();
            let mut data = Vec::with_capacity(n * per);
            for tr in trains {
                data.extend_from_slice(tr.frame(t).data());
            }
            let mut x = Tensor::from_vec(
                &[n, frame_shape[0], frame_shape[1], frame_shape[2]],
                data,
            )?;
            if keep_frames {
                rec.input_frames.push(x.clone());
            }

            for (i, layer) in self.layers.iter().enumerate() {
                x = match layer {
                    Layer::Conv { weight, bias, stride, padding } => {
                        kernels::conv2d_forward(&x, weight, bias.as_ref(), *stride, *padding)?
                    }
                    Layer::Linear { weight, bias } => {
                        kernels::linear_forward(&x, weight, bias.as_ref())?
                    }
                    Layer::AvgPool { kernel } => kernels::avgpool2d_forward(&x, *kernel)?,
                    Layer::Flatten => kernels::flatten_batch(&x)?,
                    Layer::Relu => {
                        return Err(Error::invalid(
                            "snn_forward",
                            format!("layer {}: analog activation in spiking forward", i),
                        ))
                    }
                    Layer::Dropout { .. } => match &masks[i] {
                        Some(mask) => x.zip(mask, "dropout", |a, b| a * b)?,
                        None => x,
                    },
                    Layer::Bntt(bn) => bn.forward_eval(&x, t)?,
                    Layer::Lif(params) => {
                        let pos = lif_pos[i].expect("lif position");
                        let (o, u_new) = lif_step(&potentials[pos], &x, params)?;
                        debug_assert!(o.is_binary());
                        potentials[pos] = u_new;
                        if record != RecordKind::Output {
                            rec.spikes[pos].push(o.clone());
                        }
                        if record == RecordKind::Full {
                            rec.potentials[pos].push(potentials[pos].clone());
                        }
                        o
                    }
                    Layer::Output => {
                        u_out = u_out.add(&x)?;
                        if record == RecordKind::Full {
                            rec.output_trace.push(u_out.clone());
                        }
                        u_out.clone()
                    }
                };
            }
        }

        rec.predictions = argmax_rows(&u_out);
        rec.output = u_out;
        Ok(rec)
    }

    /// Analog forward pass over real-valued inputs in [0, 1].
    pub fn ann_forward(&self, images: &Tensor64, opts: &EvalOptions) -> Result<Tensor64> {
        if images.shape().len() != 4 {
            return Err(Error::shape(
                "ann_forward",
                format!("need [N,C,H,W] input, got {:?}", images.shape()),
            ));
        }
        let shapes = self.config.layer_shapes()?;
        let masks = self.dropout_masks(images.shape()[0], opts, &shapes)?;
        let mut x = images.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Conv { weight, bias, stride, padding } => {
                    kernels::conv2d_forward(&x, weight, bias.as_ref(), *stride, *padding)?
                }
                Layer::Linear { weight, bias } => kernels::linear_forward(&x, weight, bias.as_ref())?,
                Layer::AvgPool { kernel } => kernels::avgpool2d_forward(&x, *kernel)?,
                Layer::Flatten => kernels::flatten_batch(&x)?,
                Layer::Relu => kernels::relu_forward(&x),
                Layer::Dropout { .. } => match &masks[i] {
                    Some(mask) => x.zip(mask, "dropout", |a, b| a * b)?,
                    None => x,
                },
                Layer::Bntt(_) | Layer::Lif(_) => {
                    return Err(Error::invalid(
                        "ann_forward",
                        format!("layer {}: temporal layer in analog forward", i),
                    ))
                }
                Layer::Output => x,
            };
        }
        Ok(x)
    }

    /// Unrolls the spiking dynamics onto an autodiff tape.
    pub fn unroll_on_tape(
        &self,
        tape: &mut Tape<f64>,
        input: InputNodes,
        time_steps: usize,
        mode: UnrollMode,
    ) -> Result<UnrolledNet> {
        if time_steps == 0 {
            return Err(Error::invalid("unroll", "time_steps must be positive"));
        }
        let shapes = self.config.layer_shapes()?;
        let batch = match &input {
            InputNodes::PerStep(nodes) => {
                if nodes.len() != time_steps {
                    return Err(Error::invalid(
                        "unroll",
                        format!("{} input nodes for {} steps", nodes.len(), time_steps),
                    ));
                }
                tape.value(nodes[0]).shape()[0]
            }
            InputNodes::Constant(node) => tape.value(*node).shape()[0],
        };

        // Parameter leaves, one per tensor (BNTT scales go in per step).
        let mut params: Vec<(String, NodeId)> = Vec::new();
        let mut weight_nodes: Vec<Option<(NodeId, Option<NodeId>)>> = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    let w = tape.leaf(weight.clone())?;
                    params.push((format!("layer{:02}.weight", i), w));
                    let b = match bias {
                        Some(b) => {
                            let bn = tape.leaf(b.clone())?;
                            params.push((format!("layer{:02}.bias", i), bn));
                            Some(bn)
                        }
                        None => None,
                    };
                    weight_nodes[i] = Some((w, b));
                }
                _ => {}
            }
        }
        let mut gamma_nodes: Vec<Vec<NodeId>> = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Bntt(bn) = layer {
                if time_steps > bn.time_steps {
                    return Err(Error::invalid(
                        "unroll",
                        format!("{} steps exceed BNTT horizon {}", time_steps, bn.time_steps),
                    ));
                }
                for t in 0..time_steps {
                    let row = Tensor::from_vec(&[bn.channels], bn.gamma_row(t).to_vec())?;
                    let g = tape.leaf(row)?;
                    params.push((format!("layer{:02}.gamma.t{:03}", i, t), g));
                    gamma_nodes[i].push(g);
                }
            }
        }

        let lif_layers = self.lif_indices();
        let mut u_prev: Vec<NodeId> = Vec::with_capacity(lif_layers.len());
        for &li in &lif_layers {
            let shape = match &shapes[li] {
                DataShape::Map { channels, height, width } => {
                    vec![batch, *channels, *height, *width]
                }
                DataShape::Flat { features } => vec![batch, *features],
            };
            u_prev.push(tape.leaf(Tensor::zeros(&shape))?);
        }
        let mut u_out = tape.leaf(Tensor::zeros(&[batch, self.config.classes]))?;
        let mut spikes: Vec<Vec<NodeId>> = vec![Vec::new(); lif_layers.len()];
        let beta = self.config.beta;

        for t in 0..time_steps {
            let mut x = match &input {
                InputNodes::PerStep(nodes) => nodes[t],
                InputNodes::Constant(node) => *node,
            };
            let mut lif_pos = 0usize;
            for (i, layer) in self.layers.iter().enumerate() {
                match layer {
                    Layer::Conv { stride, padding, .. } => {
                        let (w, b) = weight_nodes[i].expect("conv weights");
                        x = tape.conv2d(x, w, b, *stride, *padding)?;
                    }
                    Layer::Linear { .. } => {
                        let (w, b) = weight_nodes[i].expect("linear weights");
                        x = tape.linear(x, w, b)?;
                    }
                    Layer::AvgPool { kernel } => x = tape.avgpool2d(x, *kernel)?,
                    Layer::Flatten => x = tape.flatten(x)?,
                    Layer::Relu => {
                        return Err(Error::invalid(
                            "unroll",
                            format!("layer {}: analog activation in spiking unroll", i),
                        ))
                    }
                    Layer::Dropout { .. } => {}
                    Layer::Bntt(bn) => {
                        let g = gamma_nodes[i][t];
                        x = if mode.train_stats {
                            tape.bn_scale_batch(x, g, bn.eps)?
                        } else {
                            tape.bn_scale(
                                x,
                                g,
                                bn.running_mean_row(t).to_vec(),
                                bn.running_var_row(t).to_vec(),
                                bn.eps,
                                false,
                            )?
                        };
                    }
                    Layer::Lif(p) => {
                        let o = tape.spike(u_prev[lif_pos], p.threshold, beta)?;
                        let u_new = tape.lif_update(u_prev[lif_pos], o, x, p.leak, p.threshold)?;
                        u_prev[lif_pos] = u_new;
                        spikes[lif_pos].push(o);
                        x = o;
                        lif_pos += 1;
                    }
                    Layer::Output => {
                        u_out = tape.add(u_out, x)?;
                    }
                }
            }
        }

        Ok(UnrolledNet { output: u_out, spikes, params })
    }

    /// Builds the analog forward graph on a tape. `dropout_masks[i]`, when
    /// present, is multiplied in at layer i (values are expected to be
    /// pre-scaled for inverted dropout).
    pub fn ann_on_tape(
        &self,
        tape: &mut Tape<f64>,
        input: NodeId,
        dropout_masks: Option<&[Option<Tensor64>]>,
    ) -> Result<AnnTaped> {
        let mut params: Vec<(String, NodeId)> = Vec::new();
        let mut relu_nodes = Vec::new();
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { weight, bias, stride, padding } => {
                    let w = tape.leaf(weight.clone())?;
                    params.push((format!("layer{:02}.weight", i), w));
                    let b = match bias {
                        Some(b) => {
                            let bn = tape.leaf(b.clone())?;
                            params.push((format!("layer{:02}.bias", i), bn));
                            Some(bn)
                        }
                        None => None,
                    };
                    x = tape.conv2d(x, w, b, *stride, *padding)?;
                }
                Layer::Linear { weight, bias } => {
                    let w = tape.leaf(weight.clone())?;
                    params.push((format!("layer{:02}.weight", i), w));
                    let b = match bias {
                        Some(b) => {
                            let bn = tape.leaf(b.clone())?;
                            params.push((format!("layer{:02}.bias", i), bn));
                            Some(bn)
                        }
                        None => None,
                    };
                    x = tape.linear(x, w, b)?;
                }
                Layer::AvgPool { kernel } => x = tape.avgpool2d(x, *kernel)?,
                Layer::Flatten => x = tape.flatten(x)?,
                Layer::Relu => {
                    x = tape.relu(x)?;
                    relu_nodes.push(x);
                }
                Layer::Dropout { .. } => {
                    if let Some(masks) = dropout_masks {
                        if let Some(mask) = &masks[i] {
                            x = tape.mask_mul(x, mask.clone())?;
                        }
                    }
                }
                Layer::Bntt(_) | Layer::Lif(_) => {
                    return Err(Error::invalid(
                        "ann_on_tape",
                        format!("layer {}: temporal layer in analog graph", i),
                    ))
                }
                Layer::Output => {}
            }
        }
        Ok(AnnTaped { logits: x, relu_nodes, params })
    }
}

fn init_uniform(shape: &[usize], fan_in: usize, seed: u64, layer: usize) -> Result<Tensor64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = rng::stream_rng(seed, &[0x494e4954, layer as u64]);
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        let u: f64 = rng.gen();
        data.push((2.0 * u - 1.0) * bound);
    }
    Tensor::from_vec(shape, data)
}

pub(crate) fn argmax_rows(t: &Tensor64) -> Vec<usize> {
    let (n, c) = (t.shape()[0], t.shape()[1]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = &t.data()[i * c..(i + 1) * c];
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}
