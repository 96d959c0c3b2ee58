//! train / convert / infer subcommands.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use spikemap::io::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use spikemap::io::report::{write_jsonl, write_manifest, RunManifest, TrainLogRecord};
use spikemap::io::write_atomic;
use spikemap::rng::derive_seed;
use spikemap::snn::{poisson_encode, EvalOptions, Network, NetworkConfig, RecordKind};
use spikemap::train::{convert_ann_to_snn, train_ann, train_snn, ConversionOptions, TrainConfig};

use crate::common::{self, DataArgs};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Network family: "snn" (BNTT + surrogate gradients) or "ann"
    /// (ReLU net, the conversion source).
    #[arg(long, default_value = "snn")]
    pub arch: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Step size; the surrogate BPTT path blows up well before 0.1 at the
    /// default scale, so keep this small.
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub time_steps: usize,
    /// Membrane leak of the hidden LIF stages.
    #[arg(long, default_value_t = 0.99)]
    pub leak: f64,
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    /// Surrogate-gradient scale.
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    /// Stop early once this test accuracy is reached.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    #[arg(long, default_value_t = 25)]
    pub log_every: usize,
}

pub fn run_train(args: &TrainArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let (train_data, test_data) = args.data.load(args.seed)?;
    let input = input_shape(&train_data)?;
    let init = derive_seed(args.seed, &[common::INIT_STREAM]);

    let config = match args.arch.as_str() {
        "snn" => NetworkConfig::snn_preset(
            input,
            train_data.classes,
            args.time_steps,
            args.leak,
            args.threshold,
            args.beta,
            init,
        ),
        "ann" => NetworkConfig::ann_preset(input, train_data.classes, init),
        other => bail!("unknown arch {:?}; use snn or ann", other),
    };
    let mut net = Network::new(config.clone())?;

    let mut cfg = TrainConfig::new(args.epochs, args.batch_size, args.lr, args.seed);
    cfg.target_accuracy = args.target_accuracy;
    cfg.log_every = args.log_every;

    let mut log: Vec<TrainLogRecord> = Vec::new();
    let summary = if args.arch == "snn" {
        train_snn(&mut net, &train_data, Some(&test_data), &cfg, |r| log.push(r.clone()))?
    } else {
        train_ann(&mut net, &train_data, Some(&test_data), &cfg, |r| log.push(r.clone()))?
    };

    let meta = CheckpointMeta {
        seed: args.seed,
        epoch: summary.epochs_run,
        kind: format!("{}-trained", args.arch),
        note: String::new(),
    };
    save_checkpoint(&out.join("checkpoint.spkm"), &net, &meta, None)?;
    write_jsonl(&out.join("train_log.jsonl"), &log)?;
    let summary_json = serde_json::json!({
        "epochs_run": summary.epochs_run,
        "final_loss": summary.final_loss,
        "test_accuracy": summary.test_accuracy,
        "reached_target": summary.reached_target,
    });
    write_atomic(
        &out.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary_json)?).as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "train",
        args.seed,
        serde_json::json!({
            "arch": args.arch,
            "network": config,
            "data": args.data.describe(),
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "target_accuracy": args.target_accuracy,
        }),
    );
    manifest.outputs = vec![
        "checkpoint.spkm".into(),
        "train_log.jsonl".into(),
        "summary.json".into(),
    ];
    write_manifest(&out, &manifest)?;

    match summary.test_accuracy {
        Some(acc) => println!(
            "trained {} for {} epochs: loss {:.4}, test accuracy {:.2}%",
            args.arch,
            summary.epochs_run,
            summary.final_loss,
            100.0 * acc
        ),
        None => println!(
            "trained {} for {} epochs: loss {:.4}",
            args.arch, summary.epochs_run, summary.final_loss
        ),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Trained analog checkpoint to convert.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Simulation length of the calibration scan.
    #[arg(long, default_value_t = 100)]
    pub time_steps: usize,
    /// Threshold scaling factor applied after the scan.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Calibration images drawn from the training split.
    #[arg(long, default_value_t = 128)]
    pub calibration: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run_convert(args: &ConvertArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let loaded = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    if !common::is_analog(&loaded.net.config) {
        bail!("checkpoint {} holds a spiking network already", args.checkpoint.display());
    }
    let (train_data, _) = args.data.load(args.seed)?;
    let opts = ConversionOptions {
        time_steps: args.time_steps,
        rho: args.rho,
        calibration: args.calibration,
        seed: args.seed,
    };
    let outcome = convert_ann_to_snn(&loaded.net, &train_data, &opts)?;

    let meta = CheckpointMeta {
        seed: args.seed,
        epoch: loaded.meta.epoch,
        kind: "converted-from-ann".into(),
        note: format!("rho={} calibration={} scan_T={}", args.rho, args.calibration, args.time_steps),
    };
    save_checkpoint(&out.join("checkpoint.spkm"), &outcome.network, &meta, None)?;
    write_jsonl(&out.join("scan.jsonl"), &outcome.scan)?;

    let mut manifest = RunManifest::new(
        "convert",
        args.seed,
        serde_json::json!({
            "source": args.checkpoint.display().to_string(),
            "time_steps": args.time_steps,
            "rho": args.rho,
            "calibration": args.calibration,
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = vec!["checkpoint.spkm".into(), "scan.jsonl".into()];
    write_manifest(&out, &manifest)?;

    for rec in &outcome.scan {
        println!(
            "layer {:02} (stage {}): max pre-activation {:.6} -> threshold {:.6}",
            rec.layer, rec.lif_position, rec.max_pre_activation, rec.threshold
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Override the simulation length stored in the checkpoint.
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(serde::Serialize)]
struct PredictionRow {
    image: String,
    label: usize,
    prediction: usize,
}

pub fn run_infer(args: &InferArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let loaded = load_checkpoint(&args.checkpoint)?;
    let net = loaded.net;
    let (_, test_data) = args.data.load(args.seed)?;
    if test_data.classes != net.config.classes {
        bail!(
            "dataset has {} classes but the checkpoint expects {}",
            test_data.classes,
            net.config.classes
        );
    }

    let analog = common::is_analog(&net.config);
    let time_steps = args.time_steps.unwrap_or(net.config.time_steps);
    let mut rows: Vec<PredictionRow> = Vec::with_capacity(test_data.images.len());
    let indices: Vec<usize> = (0..test_data.images.len()).collect();
    for chunk in indices.chunks(args.batch_size.max(1)) {
        let predictions: Vec<usize> = if analog {
            let (images, _) = test_data.unit_batch(chunk)?;
            let logits = net.ann_forward(&images, &EvalOptions::default())?;
            argmax_rows(&logits)
        } else {
            let mut trains = Vec::with_capacity(chunk.len());
            for &i in chunk {
                trains.push(poisson_encode(
                    &test_data.images[i].pixels,
                    time_steps,
                    common::eval_seed(args.seed, i),
                )?);
            }
            net.snn_forward(&trains, &EvalOptions::default(), RecordKind::Output)?.predictions
        };
        for (k, &i) in chunk.iter().enumerate() {
            rows.push(PredictionRow {
                image: test_data.images[i].name.clone(),
                label: test_data.images[i].label,
                prediction: predictions[k],
            });
        }
    }
    let correct = rows.iter().filter(|r| r.label == r.prediction).count();
    let accuracy = correct as f64 / rows.len().max(1) as f64;

    write_jsonl(&out.join("predictions.jsonl"), &rows)?;
    let summary = serde_json::json!({
        "images": rows.len(),
        "correct": correct,
        "accuracy": accuracy,
        "time_steps": if analog { None } else { Some(time_steps) },
    });
    write_atomic(
        &out.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary)?).as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "infer",
        args.seed,
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "time_steps": time_steps,
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = vec!["predictions.jsonl".into(), "summary.json".into()];
    write_manifest(&out, &manifest)?;

    println!("{}/{} correct ({:.2}%)", correct, rows.len(), 100.0 * accuracy);
    Ok(())
}

fn input_shape(data: &spikemap::dataset::Dataset) -> anyhow::Result<[usize; 3]> {
    let first = data
        .images
        .first()
        .ok_or_else(|| anyhow::anyhow!("dataset is empty"))?;
    let s = first.pixels.shape();
    Ok([s[0], s[1], s[2]])
}

fn argmax_rows(logits: &spikemap::Tensor64) -> Vec<usize> {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
