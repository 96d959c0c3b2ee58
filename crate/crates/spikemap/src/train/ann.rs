//! Analog training step for the conversion-source network, driven through
//! the autodiff tape.

use rand::Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng;
use crate::snn::{DataShape, Layer, Network};
use crate::tensor::Tensor;
use crate::Tensor64;

pub struct AnnStepOutput {
    pub loss: f64,
    /// Gradients aligned with `Network::named_parameters()`.
    pub grads: Vec<(String, Tensor64)>,
}

/// One analog training step over a batch of unit-range images [N,C,H,W].
/// Dropout layers apply inverted-dropout masks sampled from `mask_seed`.
pub fn ann_train_step(
    net: &Network,
    images: &Tensor64,
    labels: &[usize],
    mask_seed: u64,
) -> Result<AnnStepOutput> {
    if images.shape().len() != 4 {
        return Err(Error::shape(
            "ann_train_step",
            format!("need [N,C,H,W] input, got {:?}", images.shape()),
        ));
    }
    let n = images.shape()[0];
    if labels.len() != n {
        return Err(Error::invalid(
            "ann_train_step",
            format!("{} labels for batch {}", labels.len(), n),
        ));
    }

    // Inverted dropout masks: keep with probability 1-p, scale by 1/(1-p).
    let shapes = net.config.layer_shapes()?;
    let mut masks: Vec<Option<Tensor64>> = vec![None; net.layers.len()];
    for (i, layer) in net.layers.iter().enumerate() {
        if let Layer::Dropout { p } = layer {
            let shape = match &shapes[i] {
                DataShape::Map { channels, height, width } => vec![n, *channels, *height, *width],
                DataShape::Flat { features } => vec![n, *features],
            };
            let keep = 1.0 - p;
            let scale = 1.0 / keep;
            let mut stream = rng::stream_rng(mask_seed, &[0x414e4e44, i as u64]);
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let u: f64 = stream.gen();
                data.push(if u < *p { 0.0 } else { scale });
            }
            masks[i] = Some(Tensor::from_vec(&shape, data)?);
        }
    }

    let mut tape = Tape::new();
    let input = tape.leaf(images.clone())?;
    let taped = net.ann_on_tape(&mut tape, input, Some(&masks))?;
    let loss_node = tape.softmax_cross_entropy(taped.logits, labels)?;
    let loss = tape.value(loss_node).data()[0];
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss = {}", loss)));
    }
    let grads = tape.backward(loss_node)?;

    let mut out = Vec::with_capacity(taped.params.len());
    for (name, node) in &taped.params {
        out.push((name.clone(), grads.get(*node).clone()));
    }
    Ok(AnnStepOutput { loss, grads: out })
}
