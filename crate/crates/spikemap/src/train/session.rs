//! Epoch loops for the spiking and analog trainers.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::report::TrainLogRecord;
use crate::rng;
use crate::snn::{poisson_encode, EvalOptions, Network, RecordKind};
use crate::Tensor64;

use super::ann::ann_train_step;
use super::bptt::bptt_step;
use super::optim::{default_milestones, SgdMomentum, StepDecay};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Stop once test accuracy reaches this level (checked per epoch).
    pub target_accuracy: Option<f64>,
    /// Learning-rate decay epochs; derived from the budget when empty.
    pub milestones: Option<Vec<usize>>,
    /// Emit a log record every `log_every` optimizer steps.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, base_lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            base_lr,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed,
            target_accuracy: None,
            milestones: None,
            log_every: 25,
        }
    }

    fn schedule(&self) -> StepDecay {
        let milestones = self
            .milestones
            .clone()
            .unwrap_or_else(|| default_milestones(self.epochs));
        StepDecay::new(self.base_lr, milestones, 0.1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub test_accuracy: Option<f64>,
    pub reached_target: bool,
}

/// Deterministic per-image encoding seed: fresh spike draws every epoch,
/// replayable across runs.
pub fn encode_seed_for(seed: u64, epoch: usize, image_index: usize) -> u64 {
    rng::derive_seed(seed, &[0x454e43, epoch as u64, image_index as u64])
}

fn shuffled_indices(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = rng::stream_rng(seed, &[0x53485546, epoch as u64]);
    idx.shuffle(&mut rng);
    idx
}

/// Trains the spiking network with surrogate-gradient BPTT.
pub fn train_snn(
    net: &mut Network,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
    cfg: &TrainConfig,
    mut log: impl FnMut(&TrainLogRecord),
) -> Result<TrainSummary> {
    validate_dataset(net, train_data)?;
    let schedule = cfg.schedule();
    let mut opt = SgdMomentum::new(cfg.base_lr, cfg.momentum, cfg.weight_decay)?;
    let time_steps = net.config.time_steps;
    let mut last_loss = f64::NAN;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        let order = shuffled_indices(train_data.images.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let mut trains = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let img = &train_data.images[i];
                trains.push(poisson_encode(
                    &img.pixels,
                    time_steps,
                    encode_seed_for(cfg.seed, epoch, i),
                )?);
                labels.push(img.label);
            }
            let out = bptt_step(net, &trains, &labels).map_err(|e| match e {
                Error::Diverged(msg) => {
                    Error::Diverged(format!("epoch {} step {}: {}", epoch, step, msg))
                }
                other => other,
            })?;
            opt.step(net, &out.grads)?;
            last_loss = out.loss;
            if step % cfg.log_every == 0 {
                log(&TrainLogRecord {
                    epoch,
                    step,
                    loss: out.loss,
                    lr: opt.lr,
                    spikes_per_layer: out
                        .spike_fraction
                        .iter()
                        .map(|per_t| per_t.iter().sum::<f64>() / per_t.len().max(1) as f64)
                        .collect(),
                });
            }
            step += 1;
        }
        if let (Some(target), Some(test)) = (cfg.target_accuracy, test_data) {
            let acc = evaluate_snn(net, test, time_steps, cfg.seed, cfg.batch_size)?;
            if acc >= target {
                return Ok(TrainSummary {
                    epochs_run: epoch + 1,
                    final_loss: last_loss,
                    test_accuracy: Some(acc),
                    reached_target: true,
                });
            }
        }
    }
    let test_accuracy = match test_data {
        Some(test) => Some(evaluate_snn(net, test, time_steps, cfg.seed, cfg.batch_size)?),
        None => None,
    };
    let reached_target = match (cfg.target_accuracy, test_accuracy) {
        (Some(t), Some(a)) => a >= t,
        _ => false,
    };
    Ok(TrainSummary { epochs_run: cfg.epochs, final_loss: last_loss, test_accuracy, reached_target })
}

/// Top-1 accuracy of the spiking network. Evaluation spike trains are drawn
/// from a fixed stream independent of the training epochs.
pub fn evaluate_snn(
    net: &Network,
    data: &Dataset,
    time_steps: usize,
    seed: u64,
    batch_size: usize,
) -> Result<f64> {
    validate_dataset(net, data)?;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.images.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let mut trains = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let img = &data.images[i];
            trains.push(poisson_encode(
                &img.pixels,
                time_steps,
                rng::derive_seed(seed, &[0x4556414c, i as u64]),
            )?);
        }
        let rec = net.snn_forward(&trains, &EvalOptions::default(), RecordKind::Output)?;
        for (k, &i) in chunk.iter().enumerate() {
            if rec.predictions[k] == data.images[i].label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.images.len() as f64)
}

/// Trains the analog network with plain backprop.
pub fn train_ann(
    net: &mut Network,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
    cfg: &TrainConfig,
    mut log: impl FnMut(&TrainLogRecord),
) -> Result<TrainSummary> {
    validate_dataset(net, train_data)?;
    let schedule = cfg.schedule();
    let mut opt = SgdMomentum::new(cfg.base_lr, cfg.momentum, cfg.weight_decay)?;
    let mut last_loss = f64::NAN;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        let order = shuffled_indices(train_data.images.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let (images, labels) = train_data.unit_batch(chunk)?;
            let mask_seed = rng::derive_seed(cfg.seed, &[0x4d41534b, epoch as u64, step as u64]);
            let out = ann_train_step(net, &images, &labels, mask_seed)?;
            opt.step(net, &out.grads)?;
            last_loss = out.loss;
            if step % cfg.log_every == 0 {
                log(&TrainLogRecord {
                    epoch,
                    step,
                    loss: out.loss,
                    lr: opt.lr,
                    spikes_per_layer: Vec::new(),
                });
            }
            step += 1;
        }
        if let (Some(target), Some(test)) = (cfg.target_accuracy, test_data) {
            let acc = evaluate_ann(net, test, cfg.batch_size)?;
            if acc >= target {
                return Ok(TrainSummary {
                    epochs_run: epoch + 1,
                    final_loss: last_loss,
                    test_accuracy: Some(acc),
                    reached_target: true,
                });
            }
        }
    }
    let test_accuracy = match test_data {
        Some(test) => Some(evaluate_ann(net, test, cfg.batch_size)?),
        None => None,
    };
    let reached_target = match (cfg.target_accuracy, test_accuracy) {
        (Some(t), Some(a)) => a >= t,
        _ => false,
    };
    Ok(TrainSummary { epochs_run: cfg.epochs, final_loss: last_loss, test_accuracy, reached_target })
}

/// Top-1 accuracy of the analog network on unit-range inputs.
pub fn evaluate_ann(net: &Network, data: &Dataset, batch_size: usize) -> Result<f64> {
    validate_dataset(net, data)?;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.images.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (images, labels) = data.unit_batch(chunk)?;
        let logits = net.ann_forward(&images, &EvalOptions::default())?;
        let preds = argmax_rows(&logits);
        for (p, l) in preds.iter().zip(labels.iter()) {
            if p == l {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.images.len() as f64)
}

fn argmax_rows(t: &Tensor64) -> Vec<usize> {
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

fn validate_dataset(net: &Network, data: &Dataset) -> Result<()> {
    if data.images.is_empty() {
        return Err(Error::Dataset("empty dataset".to_string()));
    }
    if data.classes != net.config.classes {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, network expects {}",
            data.classes, net.config.classes
        )));
    }
    Ok(())
}
