//! Attribution maps for spiking and analog networks.
//!
//! Two families live here. The spike activity map (SAM) is forward-only: each
//! neuron carries a contribution score that decays exponentially between its
//! past spikes and the present step, and the per-step heatmap sums those
//! scores over channels wherever a neuron fires now. The Grad-CAM variants
//! weight activation maps by pooled gradients of the class score; the spiking
//! version replays a recorded run on the autodiff tape so the gradient flows
//! through the exact spike pattern that was observed.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::kernels;
use crate::snn::{InputNodes, Network, SpikeRecord, UnrollMode};
use crate::tensor::offset4;
use crate::Tensor64;

/// A single-image spatial attribution map.
#[derive(Debug, Clone)]
pub struct Heatmap {
    /// Row-major [H, W] values, non-negative for the methods in this module.
    pub values: Tensor64,
    /// Network layer the map was read from (0 for input-level maps).
    pub layer: usize,
    /// Which simulation step produced the map; None for analog networks.
    pub time_step: Option<usize>,
    /// Class the map explains; None for the label-free SAM.
    pub class: Option<usize>,
}

impl Heatmap {
    pub fn new(values: Tensor64, time_step: Option<usize>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::shape(
                "heatmap",
                format!("expected [H, W], got {:?}", values.shape()),
            ));
        }
        Ok(Heatmap { values, layer: 0, time_step, class: None })
    }

    pub fn with_layer(mut self, layer: usize) -> Self {
        self.layer = layer;
        self
    }

    pub fn with_class(mut self, class: usize) -> Self {
        self.class = Some(class);
        self
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Bilinear upsample to a new spatial size, keeping the labels.
    pub fn upsampled(&self, out_h: usize, out_w: usize) -> Result<Heatmap> {
        let values = kernels::bilinear_resize(&self.values, out_h, out_w)?;
        Ok(Heatmap { values, layer: self.layer, time_step: self.time_step, class: self.class })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(
            "tscs",
            format!("gamma must be finite and non-negative, got {}", gamma),
        ));
    }
    Ok(())
}

/// Temporal spike contribution score between a past spike at `t_prime` and
/// the present step `t`: exp(-gamma * (t - t_prime)).
pub fn tscs(t: usize, t_prime: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if t_prime > t {
        return Err(Error::invalid(
            "tscs",
            format!("t_prime {} is later than t {}", t_prime, t),
        ));
    }
    Ok((-gamma * (t - t_prime) as f64).exp())
}

/// Neuronal contribution score at step `t`: the sum of contribution scores
/// over the neuron's spikes at strictly earlier steps.
pub fn ncs_direct(spike_times: &[usize], t: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut total = 0.0;
    for &tp in spike_times {
        if tp < t {
            total += tscs(t, tp, gamma)?;
        }
    }
    Ok(total)
}

/// Streaming neuronal contribution scores for a whole layer.
///
/// `scores()` holds the per-element NCS at the current step. `advance`
/// folds in the current step's spikes and decays, moving the state to the
/// next step. The recurrence A <- exp(-gamma) * (A + s_t) reproduces
/// `ncs_direct` exactly because every stored spike ages by one step at a
/// time.
#[derive(Debug, Clone)]
pub struct NcsState {
    scores: Tensor64,
    decay: f64,
}

impl NcsState {
    pub fn new(shape: &[usize], gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(NcsState { scores: Tensor64::zeros(shape), decay: (-gamma).exp() })
    }

    pub fn scores(&self) -> &Tensor64 {
        &self.scores
    }

    pub fn advance(&mut self, spikes: &Tensor64) -> Result<()> {
        if spikes.shape() != self.scores.shape() {
            return Err(Error::shape(
                "ncs::advance",
                format!("spikes {:?} vs state {:?}", spikes.shape(), self.scores.shape()),
            ));
        }
        if !spikes.is_binary() {
            return Err(Error::invalid("ncs::advance", "spike frame is not binary"));
        }
        let decay = self.decay;
        self.scores = self.scores.zip(spikes, "ncs::advance", |a, s| decay * (a + s))?;
        Ok(())
    }
}

fn spike_frames_for(record: &SpikeRecord, lif_pos: usize) -> Result<&[Tensor64]> {
    let per_layer = record.spikes.get(lif_pos).ok_or_else(|| {
        Error::invalid(
            "attribution",
            format!("LIF position {} out of range ({} stages)", lif_pos, record.spikes.len()),
        )
    })?;
    if per_layer.len() != record.time_steps {
        return Err(Error::invalid(
            "attribution",
            "record lacks spike frames; rerun the forward pass with spike recording on",
        ));
    }
    Ok(per_layer)
}

fn require_single_image(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    if shape.len() != 4 {
        return Err(Error::shape(
            op,
            format!("need spatial spike maps [1, C, H, W], got {:?}", shape),
        ));
    }
    if shape[0] != 1 {
        return Err(Error::invalid(op, format!("batch size must be 1, got {}", shape[0])));
    }
    Ok((shape[1], shape[2], shape[3]))
}

/// Spike activity map at one LIF stage, one heatmap per simulation step.
///
/// `lif_pos` indexes into `record.lif_layers`. The record must come from a
/// single-image forward pass over a convolutional stage.
pub fn sam_compute(record: &SpikeRecord, lif_pos: usize, gamma: f64) -> Result<Vec<Heatmap>> {
    let frames = spike_frames_for(record, lif_pos)?;
    let (c, h, w) = require_single_image(frames[0].shape(), "sam")?;
    let mut state = NcsState::new(frames[0].shape(), gamma)?;
    let mut maps = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let mut values = vec![0.0f64; h * w];
        let scores = state.scores().data();
        let spikes = frame.data();
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let i = offset4(frame.shape(), 0, k, y, x);
                    values[y * w + x] += scores[i] * spikes[i];
                }
            }
        }
        maps.push(
            Heatmap::new(Tensor64::from_vec(&[h, w], values)?, Some(t))?
                .with_layer(record.lif_layers[lif_pos]),
        );
        state.advance(frame)?;
    }
    Ok(maps)
}

/// Grad-CAM over a spiking run: replays the recorded pass on the tape,
/// differentiates the target class score, and weights each step's spike
/// frame by its channel-pooled gradient.
///
/// Channel weights pool the gradient over space and time, so every step
/// shares one weight vector; the per-step maps differ only through the
/// spikes. The replay is checked against the record frame by frame and
/// refuses to continue on any mismatch.
pub fn snn_gradcam(
    net: &Network,
    record: &SpikeRecord,
    lif_pos: usize,
    class: usize,
) -> Result<Vec<Heatmap>> {
    if record.input_frames.len() != record.time_steps {
        return Err(Error::invalid(
            "gradcam",
            "record lacks input frames; rerun the forward pass with spike recording on",
        ));
    }
    let frames = spike_frames_for(record, lif_pos)?;
    let (c, h, w) = require_single_image(frames[0].shape(), "gradcam")?;
    if class >= net.config.classes {
        return Err(Error::invalid(
            "gradcam",
            format!("class {} out of range ({} classes)", class, net.config.classes),
        ));
    }

    let mut tape = Tape::new();
    let mut inputs = Vec::with_capacity(record.time_steps);
    for frame in &record.input_frames {
        inputs.push(tape.leaf(frame.clone())?);
    }
    let unrolled = net.unroll_on_tape(
        &mut tape,
        InputNodes::PerStep(inputs),
        record.time_steps,
        UnrollMode { train_stats: false },
    )?;
    for (pos, per_t) in unrolled.spikes.iter().enumerate() {
        for (t, &node) in per_t.iter().enumerate() {
            if tape.value(node).data() != record.spikes[pos][t].data() {
                return Err(Error::invalid(
                    "gradcam",
                    format!("replayed spikes diverge from the record at stage {} step {}", pos, t),
                ));
            }
        }
    }
    let score = tape.pick_class(unrolled.output, class)?;
    let grads = tape.backward(score)?;

    let norm = (h * w * record.time_steps) as f64;
    let mut alpha = vec![0.0f64; c];
    for &node in &unrolled.spikes[lif_pos] {
        let g = grads.get(node);
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    alpha[k] += g.data()[offset4(g.shape(), 0, k, y, x)];
                }
            }
        }
    }
    for a in alpha.iter_mut() {
        *a /= norm;
    }

    let mut maps = Vec::with_capacity(record.time_steps);
    for (t, frame) in frames.iter().enumerate() {
        let mut values = vec![0.0f64; h * w];
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    values[y * w + x] +=
                        alpha[k] * frame.data()[offset4(frame.shape(), 0, k, y, x)];
                }
            }
        }
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        maps.push(
            Heatmap::new(Tensor64::from_vec(&[h, w], values)?, Some(t))?
                .with_layer(record.lif_layers[lif_pos])
                .with_class(class),
        );
    }
    Ok(maps)
}

/// Plain Grad-CAM on the analog network at the given ReLU stage.
///
/// `image` is a unit-range [C, H, W] tensor; dropout is disabled, matching
/// inference. Returns one heatmap at the stage's spatial resolution.
pub fn ann_gradcam(
    net: &Network,
    image: &Tensor64,
    relu_stage: usize,
    class: usize,
) -> Result<Heatmap> {
    if image.shape().len() != 3 {
        return Err(Error::shape(
            "gradcam",
            format!("expected [C, H, W] image, got {:?}", image.shape()),
        ));
    }
    if class >= net.config.classes {
        return Err(Error::invalid(
            "gradcam",
            format!("class {} out of range ({} classes)", class, net.config.classes),
        ));
    }
    let mut shape = vec![1usize];
    shape.extend_from_slice(image.shape());
    let batched = image.clone().reshaped(&shape)?;

    let mut tape = Tape::new();
    let input = tape.leaf(batched)?;
    let taped = net.ann_on_tape(&mut tape, input, None)?;
    let node = *taped.relu_nodes.get(relu_stage).ok_or_else(|| {
        Error::invalid(
            "gradcam",
            format!("ReLU stage {} out of range ({} stages)", relu_stage, taped.relu_nodes.len()),
        )
    })?;
    let activation = tape.value(node).clone();
    let (c, h, w) = require_single_image(activation.shape(), "gradcam")?;

    let score = tape.pick_class(taped.logits, class)?;
    let grads = tape.backward(score)?;
    let g = grads.get(node);

    let norm = (h * w) as f64;
    let mut values = vec![0.0f64; h * w];
    for k in 0..c {
        let mut alpha = 0.0;
        for y in 0..h {
            for x in 0..w {
                alpha += g.data()[offset4(g.shape(), 0, k, y, x)];
            }
        }
        alpha /= norm;
        for y in 0..h {
            for x in 0..w {
                values[y * w + x] +=
                    alpha * activation.data()[offset4(activation.shape(), 0, k, y, x)];
            }
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let layer = net
        .config
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, crate::snn::LayerSpec::Relu))
        .nth(relu_stage)
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(Heatmap::new(Tensor64::from_vec(&[h, w], values)?, None)?
        .with_layer(layer)
        .with_class(class))
}

/// Forward-only per-step input attribution used as a sanity baseline: the
/// NCS of the input pixels themselves, masked by the current frame.
pub fn input_sam(record: &SpikeRecord, gamma: f64) -> Result<Vec<Heatmap>> {
    if record.input_frames.len() != record.time_steps {
        return Err(Error::invalid(
            "sam",
            "record lacks input frames; rerun the forward pass with spike recording on",
        ));
    }
    let (c, h, w) = require_single_image(record.input_frames[0].shape(), "sam")?;
    let mut state = NcsState::new(record.input_frames[0].shape(), gamma)?;
    let mut maps = Vec::with_capacity(record.time_steps);
    for (t, frame) in record.input_frames.iter().enumerate() {
        let mut values = vec![0.0f64; h * w];
        let scores = state.scores().data();
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let i = offset4(frame.shape(), 0, k, y, x);
                    values[y * w + x] += scores[i] * frame.data()[i];
                }
            }
        }
        maps.push(Heatmap::new(Tensor64::from_vec(&[h, w], values)?, Some(t))?);
        state.advance(frame)?;
    }
    Ok(maps)
}
