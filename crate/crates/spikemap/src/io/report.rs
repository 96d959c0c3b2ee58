//! Line-oriented machine-readable records and the run manifest.
//!
//! Records serialize one JSON object per line. Nothing here embeds wall
//! time or host details: identical inputs produce byte-identical files,
//! which the determinism checks rely on.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_atomic;

/// One optimizer-step observation from a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Mean firing fraction per LIF stage (empty for analog training).
    pub spikes_per_layer: Vec<f64>,
}

/// One attribution measurement: an (image, layer, method) cell, optionally
/// at a specific kernel steepness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image: String,
    pub layer: usize,
    pub method: String,
    pub gamma: Option<f64>,
    pub localization_error: Option<f64>,
    pub argmin_time_step: Option<usize>,
    pub reference_entropy: Option<f64>,
    pub variance_max: Option<f64>,
}

/// One adversarial-robustness measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub method: String,
    pub epsilon: f64,
    /// Set on aggregate rows.
    pub accuracy: Option<f64>,
    /// Set on per-image rows.
    pub image: Option<String>,
    pub l1_distance: Option<f64>,
    pub zero_grad_pixels: Option<usize>,
}

/// Everything needed to re-run the experiment that produced a directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            outputs: Vec::new(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), text.as_bytes())
}
