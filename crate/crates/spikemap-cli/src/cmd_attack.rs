//! attack subcommand: FGSM accuracy sweep on the analog network plus
//! clean-vs-adversarial heatmap distances for both Grad-CAM and SAM.

use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use spikemap::dataset::Image;
use spikemap::eval::{fgsm, heatmap_l1, heatmap_l1_max_over_time, minmax_normalize, snn_fgsm_proxy};
use spikemap::interpret::{ann_gradcam, sam_compute};
use spikemap::io::checkpoint::load_checkpoint;
use spikemap::io::report::{write_jsonl, write_manifest, AttackRecord, RunManifest};
use spikemap::snn::{poisson_encode, EvalOptions, Network, RecordKind};

use crate::common::{self, DataArgs};

#[derive(Args, Debug)]
pub struct AttackArgs {
    /// Analog checkpoint under attack.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Spiking checkpoint for the SAM distance rows (optional). Its
    /// gradient comes from the expected-rate relaxation, so those rows are
    /// labeled snn-fgsm-proxy.
    #[arg(long)]
    pub snn_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated intensities for the accuracy sweep; fractions like
    /// 4/255 are accepted.
    #[arg(long, default_value = "0,2/255,4/255,8/255")]
    pub eps: String,
    /// Intensity for the heatmap-distance rows.
    #[arg(long, default_value = "4/255")]
    pub l1_eps: String,
    /// Cap on the number of images for the per-image distance rows.
    #[arg(long, default_value_t = 64)]
    pub limit: usize,
    #[arg(long, default_value_t = 0)]
    pub relu_stage: usize,
    #[arg(long, default_value_t = 0)]
    pub layer_pos: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run_attack(args: &AttackArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let ann = load_checkpoint(&args.checkpoint)?.net;
    if !common::is_analog(&ann.config) {
        bail!("--checkpoint must be an analog network");
    }
    let snn = match &args.snn_checkpoint {
        Some(p) => {
            let net = load_checkpoint(p)?.net;
            if common::is_analog(&net.config) {
                bail!("--snn-checkpoint must be a spiking network");
            }
            Some(net)
        }
        None => None,
    };
    let (_, test_data) = args.data.load(args.seed)?;
    let eps_list = common::parse_fraction_list(&args.eps)?;
    let l1_eps = common::parse_fraction(&args.l1_eps)?;
    let threads = common::thread_count();

    let mut rows: Vec<AttackRecord> = Vec::new();

    // Accuracy under attack, one aggregate row per intensity.
    let images: Vec<&Image> = test_data.images.iter().collect();
    for &eps in &eps_list {
        let hits = common::parallel_map(&images, threads, |_, image| {
            let unit = image.pixels.scale(1.0 / 255.0);
            let adv = fgsm(&ann, &unit, image.label, eps)?.image;
            let batched = adv.reshaped(&[1, adv.shape()[0], adv.shape()[1], adv.shape()[2]])?;
            let logits = ann.ann_forward(&batched, &EvalOptions::default())?;
            let pred = logits
                .data()
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0;
            Ok(pred == image.label)
        })?;
        let correct = hits.iter().filter(|&&h| h).count();
        rows.push(AttackRecord {
            method: "fgsm".into(),
            epsilon: eps,
            accuracy: Some(correct as f64 / images.len().max(1) as f64),
            image: None,
            l1_distance: None,
            zero_grad_pixels: None,
        });
    }

    // Per-image heatmap distances at the reporting intensity.
    let count = test_data.images.len().min(args.limit);
    let subset: Vec<(usize, &Image)> = test_data.images[..count].iter().enumerate().collect();

    let ann_rows = common::parallel_map(&subset, threads, |_, (idx, image)| {
        let _ = idx;
        let unit = image.pixels.scale(1.0 / 255.0);
        let clean_map = ann_gradcam(&ann, &unit, args.relu_stage, image.label)?;
        let outcome = fgsm(&ann, &unit, image.label, l1_eps)?;
        let adv_map = ann_gradcam(&ann, &outcome.image, args.relu_stage, image.label)?;
        let l1 = heatmap_l1(
            &minmax_normalize(&clean_map.values)?,
            &minmax_normalize(&adv_map.values)?,
        )?;
        Ok(AttackRecord {
            method: "fgsm".into(),
            epsilon: l1_eps,
            accuracy: None,
            image: Some(image.name.clone()),
            l1_distance: Some(l1),
            zero_grad_pixels: Some(outcome.zero_grad_pixels),
        })
    })?;
    rows.extend(ann_rows);

    if let Some(snn) = &snn {
        let time_steps = args.time_steps.unwrap_or(snn.config.time_steps);
        let snn_rows = common::parallel_map(&subset, threads, |_, (idx, image)| {
            sam_distance_row(snn, image, *idx, args, l1_eps, time_steps)
        })?;
        rows.extend(snn_rows);
    }

    write_jsonl(&out.join("attacks.jsonl"), &rows)?;
    let mut manifest = RunManifest::new(
        "attack",
        args.seed,
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "snn_checkpoint": args.snn_checkpoint.as_ref().map(|p| p.display().to_string()),
            "eps": eps_list,
            "l1_eps": l1_eps,
            "limit": args.limit,
            "relu_stage": args.relu_stage,
            "layer_pos": args.layer_pos,
            "gamma": args.gamma,
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = vec!["attacks.jsonl".into()];
    write_manifest(&out, &manifest)?;

    for row in rows.iter().filter(|r| r.accuracy.is_some()) {
        println!(
            "fgsm eps {:.6}: accuracy {:.2}%",
            row.epsilon,
            100.0 * row.accuracy.unwrap()
        );
    }
    let mean_l1 = |method: &str| {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.l1_distance.is_some())
            .map(|r| r.l1_distance.unwrap())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    if let Some(m) = mean_l1("fgsm") {
        println!("mean grad-cam L1 at eps {:.6}: {:.4}", l1_eps, m);
    }
    if let Some(m) = mean_l1("snn-fgsm-proxy") {
        println!("mean sam L1 at eps {:.6} (proxy gradient): {:.4}", l1_eps, m);
    }
    Ok(())
}

/// Clean-vs-adversarial SAM distance for one image. The same encoding seed
/// drives both runs so the distance reflects the perturbation, not fresh
/// Bernoulli draws.
fn sam_distance_row(
    snn: &Network,
    image: &Image,
    index: usize,
    args: &AttackArgs,
    l1_eps: f64,
    time_steps: usize,
) -> anyhow::Result<AttackRecord> {
    let seed = common::eval_seed(args.seed, index);
    let unit = image.pixels.scale(1.0 / 255.0);
    let outcome = snn_fgsm_proxy(snn, &unit, image.label, l1_eps)?;
    let adv_pixels = outcome.image.scale(255.0);

    let clean_train = poisson_encode(&image.pixels, time_steps, seed)?;
    let adv_train = poisson_encode(&adv_pixels, time_steps, seed)?;
    let clean_rec = snn.snn_forward(&[clean_train], &EvalOptions::default(), RecordKind::Spikes)?;
    let adv_rec = snn.snn_forward(&[adv_train], &EvalOptions::default(), RecordKind::Spikes)?;
    let clean_maps = sam_compute(&clean_rec, args.layer_pos, args.gamma)?;
    let adv_maps = sam_compute(&adv_rec, args.layer_pos, args.gamma)?;
    let l1 = heatmap_l1_max_over_time(&clean_maps, &adv_maps)?;

    Ok(AttackRecord {
        method: "snn-fgsm-proxy".into(),
        epsilon: l1_eps,
        accuracy: None,
        image: Some(image.name.clone()),
        l1_distance: Some(l1),
        zero_grad_pixels: Some(outcome.zero_grad_pixels),
    })
}
