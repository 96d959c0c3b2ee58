//! explain / suppress / metrics subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use spikemap::dataset::Image;
use spikemap::eval::{localization_error, variance_max_over_time, EPS_SMOOTH};
use spikemap::interpret::{ann_gradcam, sam_compute, snn_gradcam, Heatmap};
use spikemap::io::checkpoint::load_checkpoint;
use spikemap::io::heatmap::{export_heatmap, HeatmapMode};
use spikemap::io::raster::write_raster;
use spikemap::io::report::{write_jsonl, write_manifest, MetricRecord, RunManifest};
use spikemap::io::write_atomic;
use spikemap::kernels::bilinear_resize;
use spikemap::rng::{derive_seed, stream_rng};
use spikemap::snn::{poisson_encode, EvalOptions, Network, RecordKind, SpikeRecord};
use spikemap::tensor::Tensor;
use spikemap::Tensor64;

use crate::common::{self, DataArgs};

fn parse_mode(s: &str) -> anyhow::Result<HeatmapMode> {
    match s {
        "raw" => Ok(HeatmapMode::Raw),
        "normalized" => Ok(HeatmapMode::Normalized),
        "overlay" => Ok(HeatmapMode::Overlay),
        other => bail!("unknown heatmap mode {:?}; use raw, normalized, or overlay", other),
    }
}

fn mode_extension(mode: HeatmapMode) -> &'static str {
    match mode {
        HeatmapMode::Overlay => "ppm",
        _ => "pgm",
    }
}

/// Writes a heatmap sequence as heatmap_tNNN.<ext> (or heatmap.<ext> for a
/// single analog map) and returns the file names.
fn export_sequence(
    dir: &Path,
    maps: &[Heatmap],
    mode: HeatmapMode,
    base: Option<&Tensor64>,
) -> anyhow::Result<Vec<String>> {
    let ext = mode_extension(mode);
    let mut names = Vec::with_capacity(maps.len());
    for map in maps {
        let name = match map.time_step {
            Some(t) => format!("heatmap_t{:03}.{}", t, ext),
            None => format!("heatmap.{}", ext),
        };
        export_heatmap(&dir.join(&name), map, mode, base)?;
        names.push(name);
    }
    Ok(names)
}

/// Forward pass with spike recording for the attribution methods.
fn record_spikes(
    net: &Network,
    image: &Image,
    time_steps: usize,
    encode_seed: u64,
) -> anyhow::Result<SpikeRecord> {
    let train = poisson_encode(&image.pixels, time_steps, encode_seed)?;
    Ok(net.snn_forward(&[train], &EvalOptions::default(), RecordKind::Spikes)?)
}

/// ANN Grad-CAM reference, upsampled to the input resolution.
fn reference_map(
    ann: &Network,
    image: &Image,
    relu_stage: usize,
) -> anyhow::Result<Heatmap> {
    let unit = image.pixels.scale(1.0 / 255.0);
    let map = ann_gradcam(ann, &unit, relu_stage, image.label)?;
    let (h, w) = (image.pixels.shape()[1], image.pixels.shape()[2]);
    Ok(map.upsampled(h, w)?)
}

fn upsample_all(maps: &[Heatmap], h: usize, w: usize) -> anyhow::Result<Vec<Heatmap>> {
    maps.iter().map(|m| Ok(m.upsampled(h, w)?)).collect()
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    /// Spiking checkpoint for sam / snn-gradcam, analog for ann-gradcam.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Index into the test split.
    #[arg(long, default_value_t = 0)]
    pub image_index: usize,
    /// sam | snn-gradcam | ann-gradcam
    #[arg(long, default_value = "sam")]
    pub method: String,
    /// Position among the spiking stages (0 = first conv block).
    #[arg(long, default_value_t = 0)]
    pub layer_pos: usize,
    /// ReLU stage for ann-gradcam and for the reference map.
    #[arg(long, default_value_t = 0)]
    pub relu_stage: usize,
    /// Kernel steepness for SAM.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Class to explain; defaults to the ground-truth label.
    #[arg(long)]
    pub class: Option<usize>,
    /// Analog checkpoint providing the Grad-CAM reference for the
    /// localization error (optional).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// raw | normalized | overlay
    #[arg(long, default_value = "normalized")]
    pub mode: String,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run_explain(args: &ExplainArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let mode = parse_mode(&args.mode)?;
    let loaded = load_checkpoint(&args.checkpoint)?;
    let net = loaded.net;
    let (_, test_data) = args.data.load(args.seed)?;
    let image = test_data
        .images
        .get(args.image_index)
        .ok_or_else(|| anyhow::anyhow!("image index {} out of range", args.image_index))?;
    let class = args.class.unwrap_or(image.label);
    let (h, w) = (image.pixels.shape()[1], image.pixels.shape()[2]);
    let base = mode_base(mode, image);

    let mut outputs: Vec<String> = Vec::new();
    let mut record_for_raster: Option<SpikeRecord> = None;
    let maps: Vec<Heatmap> = match args.method.as_str() {
        "sam" | "snn-gradcam" => {
            if common::is_analog(&net.config) {
                bail!("{} needs a spiking checkpoint", args.method);
            }
            let time_steps = args.time_steps.unwrap_or(net.config.time_steps);
            let record = record_spikes(
                &net,
                image,
                time_steps,
                common::eval_seed(args.seed, args.image_index),
            )?;
            let maps = if args.method == "sam" {
                sam_compute(&record, args.layer_pos, args.gamma)?
            } else {
                snn_gradcam(&net, &record, args.layer_pos, class)?
            };
            record_for_raster = Some(record);
            maps
        }
        "ann-gradcam" => {
            if !common::is_analog(&net.config) {
                bail!("ann-gradcam needs an analog checkpoint");
            }
            let unit = image.pixels.scale(1.0 / 255.0);
            vec![ann_gradcam(&net, &unit, args.relu_stage, class)?]
        }
        other => bail!("unknown method {:?}; use sam, snn-gradcam, or ann-gradcam", other),
    };

    outputs.extend(export_sequence(&out, &maps, mode, base.as_ref())?);
    if let Some(record) = &record_for_raster {
        write_raster(&out.join("raster.txt"), record)?;
        outputs.push("raster.txt".into());
    }

    let mut rec = MetricRecord {
        image: image.name.clone(),
        layer: maps[0].layer,
        method: args.method.clone(),
        gamma: (args.method == "sam").then_some(args.gamma),
        localization_error: None,
        argmin_time_step: None,
        reference_entropy: None,
        variance_max: Some(variance_max_over_time(&maps)?),
    };
    if let Some(ref_path) = &args.reference {
        let ann = load_checkpoint(ref_path)?.net;
        if !common::is_analog(&ann.config) {
            bail!("reference checkpoint must be analog");
        }
        let reference = reference_map(&ann, image, args.relu_stage)?;
        let candidates = upsample_all(&maps, h, w)?;
        let loc = localization_error(&candidates, &reference, EPS_SMOOTH)?;
        rec.localization_error = Some(loc.min_error);
        rec.argmin_time_step = Some(loc.argmin_step);
        rec.reference_entropy = Some(loc.reference_entropy);
    }
    write_jsonl(&out.join("metrics.jsonl"), &[rec.clone()])?;
    outputs.push("metrics.jsonl".into());

    let mut manifest = RunManifest::new(
        "explain",
        args.seed,
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "method": args.method,
            "image_index": args.image_index,
            "layer_pos": args.layer_pos,
            "relu_stage": args.relu_stage,
            "gamma": args.gamma,
            "class": class,
            "mode": args.mode,
            "reference": args.reference.as_ref().map(|p| p.display().to_string()),
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = outputs;
    write_manifest(&out, &manifest)?;

    match (rec.localization_error, rec.variance_max) {
        (Some(err), Some(var)) => println!(
            "{} on {}: {} maps, localization error {:.4}, max variance {:.6}",
            args.method,
            image.name,
            maps.len(),
            err,
            var
        ),
        (None, Some(var)) => println!(
            "{} on {}: {} maps, max variance {:.6}",
            args.method,
            image.name,
            maps.len(),
            var
        ),
        _ => {}
    }
    Ok(())
}

fn mode_base(mode: HeatmapMode, image: &Image) -> Option<Tensor64> {
    matches!(mode, HeatmapMode::Overlay).then(|| image.pixels.clone())
}

#[derive(Args, Debug)]
pub struct SuppressArgs {
    /// Spiking checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Explicit pair of test-set indices, e.g. "3,17"; random when absent.
    #[arg(long)]
    pub indices: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub layer_pos: usize,
    /// raw | normalized | overlay
    #[arg(long, default_value = "overlay")]
    pub mode: String,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Packs two images side by side into the network's input resolution: each
/// is squeezed to half width, so the net sees both objects at once.
fn side_by_side(left: &Tensor64, right: &Tensor64) -> anyhow::Result<Tensor64> {
    if left.shape() != right.shape() {
        bail!("images differ in shape: {:?} vs {:?}", left.shape(), right.shape());
    }
    let (c, h, w) = (left.shape()[0], left.shape()[1], left.shape()[2]);
    let half = w / 2;
    if half == 0 {
        bail!("image too narrow to split");
    }
    let mut data = vec![0.0f64; c * h * w];
    for (img, offset) in [(left, 0usize), (right, half)] {
        for ch in 0..c {
            let plane = Tensor::from_vec(
                &[h, w],
                img.data()[ch * h * w..(ch + 1) * h * w].to_vec(),
            )?;
            let squeezed = bilinear_resize(&plane, h, half)?;
            for y in 0..h {
                for x in 0..half {
                    data[ch * h * w + y * w + offset + x] = squeezed.data()[y * half + x];
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[c, h, w], data)?)
}

pub fn run_suppress(args: &SuppressArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let mode = parse_mode(&args.mode)?;
    let loaded = load_checkpoint(&args.checkpoint)?;
    let net = loaded.net;
    if common::is_analog(&net.config) {
        bail!("suppress needs a spiking checkpoint");
    }
    let (_, test_data) = args.data.load(args.seed)?;
    if test_data.images.len() < 2 {
        bail!("need at least two test images");
    }

    let (ia, ib) = match &args.indices {
        Some(spec) => {
            let parts: Vec<usize> = spec
                .split(',')
                .map(|p| p.trim().parse().context("bad --indices"))
                .collect::<anyhow::Result<_>>()?;
            if parts.len() != 2 || parts[0] == parts[1] {
                bail!("--indices needs two distinct comma-separated numbers");
            }
            (parts[0], parts[1])
        }
        None => {
            use rand::Rng;
            let mut rng = stream_rng(args.seed, &[common::SUPPRESS_STREAM]);
            let a = rng.gen_range(0..test_data.images.len());
            let mut b = rng.gen_range(0..test_data.images.len() - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        }
    };
    let left = test_data
        .images
        .get(ia)
        .ok_or_else(|| anyhow::anyhow!("index {} out of range", ia))?;
    let right = test_data
        .images
        .get(ib)
        .ok_or_else(|| anyhow::anyhow!("index {} out of range", ib))?;

    let composite = side_by_side(&left.pixels, &right.pixels)?;
    let time_steps = args.time_steps.unwrap_or(net.config.time_steps);
    let encode_seed = derive_seed(args.seed, &[common::SUPPRESS_STREAM, 1]);
    let train = poisson_encode(&composite, time_steps, encode_seed)?;
    let record = net.snn_forward(&[train], &EvalOptions::default(), RecordKind::Spikes)?;
    let prediction = record.predictions[0];
    let maps = sam_compute(&record, args.layer_pos, args.gamma)?;

    // How the map's mass moves between the two halves over time.
    let mut mass: Vec<serde_json::Value> = Vec::with_capacity(maps.len());
    for (t, map) in maps.iter().enumerate() {
        let w = map.width();
        let half = w / 2;
        let mut l = 0.0;
        let mut r = 0.0;
        for (i, &v) in map.values.data().iter().enumerate() {
            if i % w < half {
                l += v;
            } else {
                r += v;
            }
        }
        mass.push(serde_json::json!({ "t": t, "left": l, "right": r }));
    }

    let base = matches!(mode, HeatmapMode::Overlay).then(|| composite.clone());
    let mut outputs = export_sequence(&out, &maps, mode, base.as_ref())?;

    let composite_name = if composite.shape()[0] == 3 { "composite.ppm" } else { "composite.pgm" };
    if composite.shape()[0] == 3 {
        spikemap::io::pnm::write_ppm(&out.join(composite_name), &composite, &[])?;
    } else {
        let plane = composite.clone().reshaped(&[composite.shape()[1], composite.shape()[2]])?;
        spikemap::io::pnm::write_pgm(&out.join(composite_name), &plane, &[])?;
    }
    outputs.push(composite_name.into());
    write_raster(&out.join("raster.txt"), &record)?;
    outputs.push("raster.txt".into());

    let summary = serde_json::json!({
        "left": { "index": ia, "name": left.name, "label": left.label },
        "right": { "index": ib, "name": right.name, "label": right.label },
        "prediction": prediction,
        "predicted_side": if prediction == left.label && prediction != right.label {
            "left"
        } else if prediction == right.label && prediction != left.label {
            "right"
        } else {
            "ambiguous"
        },
        "gamma": args.gamma,
        "mass_per_step": mass,
    });
    write_atomic(
        &out.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary)?).as_bytes(),
    )?;
    outputs.push("summary.json".into());

    let mut manifest = RunManifest::new(
        "suppress",
        args.seed,
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "indices": [ia, ib],
            "gamma": args.gamma,
            "layer_pos": args.layer_pos,
            "mode": args.mode,
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = outputs;
    write_manifest(&out, &manifest)?;

    println!(
        "pair ({}, {}) labels ({}, {}) -> prediction {}",
        left.name, right.name, left.label, right.label, prediction
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Spiking checkpoint under study.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Analog checkpoint providing the Grad-CAM reference.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated methods: sam, snn-gradcam.
    #[arg(long, default_value = "sam,snn-gradcam")]
    pub methods: String,
    /// Comma-separated kernel steepness values for SAM.
    #[arg(long, default_value = "0.5")]
    pub gammas: String,
    #[arg(long, default_value_t = 0)]
    pub layer_pos: usize,
    #[arg(long, default_value_t = 0)]
    pub relu_stage: usize,
    /// Cap on the number of test images measured.
    #[arg(long, default_value_t = 200)]
    pub limit: usize,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run_metrics(args: &MetricsArgs) -> anyhow::Result<()> {
    let out = common::resolve_out_dir(&args.out)?;
    let snn = load_checkpoint(&args.checkpoint)?.net;
    if common::is_analog(&snn.config) {
        bail!("--checkpoint must be a spiking network");
    }
    let ann = load_checkpoint(&args.reference)?.net;
    if !common::is_analog(&ann.config) {
        bail!("--reference must be an analog network");
    }
    let (_, test_data) = args.data.load(args.seed)?;
    let methods: Vec<String> = args
        .methods
        .split(',')
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    for m in &methods {
        if m != "sam" && m != "snn-gradcam" {
            bail!("unknown method {:?} in --methods", m);
        }
    }
    let gammas = common::parse_fraction_list(&args.gammas)?;
    let time_steps = args.time_steps.unwrap_or(snn.config.time_steps);
    let count = test_data.images.len().min(args.limit);
    let images: Vec<(usize, &Image)> =
        test_data.images[..count].iter().enumerate().collect();

    let records: Vec<Vec<MetricRecord>> =
        common::parallel_map(&images, common::thread_count(), |_, (idx, image)| {
            per_image_metrics(
                &snn,
                &ann,
                image,
                *idx,
                &methods,
                &gammas,
                args.layer_pos,
                args.relu_stage,
                time_steps,
                args.seed,
            )
        })?;
    let rows: Vec<MetricRecord> = records.into_iter().flatten().collect();

    write_jsonl(&out.join("metrics.jsonl"), &rows)?;
    let mut manifest = RunManifest::new(
        "metrics",
        args.seed,
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "reference": args.reference.display().to_string(),
            "methods": methods,
            "gammas": gammas,
            "layer_pos": args.layer_pos,
            "relu_stage": args.relu_stage,
            "limit": args.limit,
            "time_steps": time_steps,
            "data": args.data.describe(),
        }),
    );
    manifest.outputs = vec!["metrics.jsonl".into()];
    write_manifest(&out, &manifest)?;

    println!("{} records over {} images", rows.len(), count);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn per_image_metrics(
    snn: &Network,
    ann: &Network,
    image: &Image,
    index: usize,
    methods: &[String],
    gammas: &[f64],
    layer_pos: usize,
    relu_stage: usize,
    time_steps: usize,
    seed: u64,
) -> anyhow::Result<Vec<MetricRecord>> {
    let (h, w) = (image.pixels.shape()[1], image.pixels.shape()[2]);
    let reference = reference_map(ann, image, relu_stage)?;
    let record = record_spikes(snn, image, time_steps, common::eval_seed(seed, index))?;

    let mut rows = Vec::new();
    let mut push = |method: &str, gamma: Option<f64>, maps: &[Heatmap]| -> anyhow::Result<()> {
        let candidates = upsample_all(maps, h, w)?;
        let loc = localization_error(&candidates, &reference, EPS_SMOOTH)?;
        rows.push(MetricRecord {
            image: image.name.clone(),
            layer: maps[0].layer,
            method: method.to_string(),
            gamma,
            localization_error: Some(loc.min_error),
            argmin_time_step: Some(loc.argmin_step),
            reference_entropy: Some(loc.reference_entropy),
            variance_max: Some(variance_max_over_time(maps)?),
        });
        Ok(())
    };

    for method in methods {
        if method == "sam" {
            for &gamma in gammas {
                let maps = sam_compute(&record, layer_pos, gamma)?;
                push("sam", Some(gamma), &maps)?;
            }
        } else {
            let maps = snn_gradcam(snn, &record, layer_pos, image.label)?;
            push("snn-gradcam", None, &maps)?;
        }
    }
    Ok(rows)
}
