//! report subcommand: aggregates metrics.jsonl files from a sweep directory
//! into localization-error-vs-gamma tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use spikemap::io::report::{read_jsonl, write_jsonl, write_manifest, MetricRecord, RunManifest};
use spikemap::io::write_atomic;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory tree containing metrics.jsonl files (e.g. one subdirectory
    /// per gamma value).
    #[arg(long)]
    pub sweep_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(serde::Serialize)]
struct SummaryRow {
    method: String,
    gamma: Option<f64>,
    images: usize,
    mean_localization_error: f64,
    min_localization_error: f64,
    max_localization_error: f64,
    mean_variance_max: Option<f64>,
}

fn collect_metric_files(root: &Path, into: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_metric_files(&path, into)?;
        } else if path.file_name().map(|n| n == "metrics.jsonl").unwrap_or(false) {
            into.push(path);
        }
    }
    Ok(())
}

/// Sortable key for an optional gamma; None sorts first.
fn gamma_key(gamma: Option<f64>) -> String {
    match gamma {
        None => "-".to_string(),
        Some(g) => format!("{:012.6}", g),
    }
}

pub fn run_report(args: &ReportArgs) -> anyhow::Result<()> {
    let out = crate::common::resolve_out_dir(&args.out)?;
    let mut files = Vec::new();
    collect_metric_files(&args.sweep_dir, &mut files)?;
    if files.is_empty() {
        bail!("no metrics.jsonl files under {}", args.sweep_dir.display());
    }
    let mut records: Vec<MetricRecord> = Vec::new();
    for f in &files {
        records.extend(read_jsonl::<MetricRecord>(f)?);
    }
    let measured: Vec<&MetricRecord> =
        records.iter().filter(|r| r.localization_error.is_some()).collect();
    if measured.is_empty() {
        bail!("no localization errors in the collected records");
    }

    // One summary row per (method, gamma).
    let mut groups: BTreeMap<(String, String), Vec<&MetricRecord>> = BTreeMap::new();
    for r in &measured {
        groups
            .entry((r.method.clone(), gamma_key(r.gamma)))
            .or_default()
            .push(r);
    }
    let mut rows: Vec<SummaryRow> = Vec::new();
    for ((method, _), group) in &groups {
        let errs: Vec<f64> = group.iter().map(|r| r.localization_error.unwrap()).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let vars: Vec<f64> = group.iter().filter_map(|r| r.variance_max).collect();
        rows.push(SummaryRow {
            method: method.clone(),
            gamma: group[0].gamma,
            images: errs.len(),
            mean_localization_error: mean,
            min_localization_error: errs.iter().cloned().fold(f64::INFINITY, f64::min),
            max_localization_error: errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_variance_max: (!vars.is_empty())
                .then(|| vars.iter().sum::<f64>() / vars.len() as f64),
        });
    }

    // Per-image best gamma for SAM: which steepness localizes best.
    let mut best: BTreeMap<String, (f64, f64)> = BTreeMap::new(); // image -> (gamma, err)
    for r in &measured {
        if r.method != "sam" {
            continue;
        }
        let (Some(g), Some(e)) = (r.gamma, r.localization_error) else { continue };
        match best.get(&r.image) {
            Some(&(_, prev)) if prev <= e => {}
            _ => {
                best.insert(r.image.clone(), (g, e));
            }
        }
    }
    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    for (g, _) in best.values() {
        *histogram.entry(format!("{:012.6}", g)).or_default() += 1;
    }

    let mut table = String::new();
    table.push_str("# localization error vs gamma\n");
    table.push_str(&format!(
        "{:<14} {:>10} {:>8} {:>12} {:>12} {:>12} {:>14}\n",
        "method", "gamma", "images", "mean", "min", "max", "mean_var_max"
    ));
    for row in &rows {
        let gamma = row.gamma.map(|g| format!("{:.4}", g)).unwrap_or_else(|| "-".into());
        let var = row
            .mean_variance_max
            .map(|v| format!("{:.6}", v))
            .unwrap_or_else(|| "-".into());
        table.push_str(&format!(
            "{:<14} {:>10} {:>8} {:>12.6} {:>12.6} {:>12.6} {:>14}\n",
            row.method,
            gamma,
            row.images,
            row.mean_localization_error,
            row.min_localization_error,
            row.max_localization_error,
            var
        ));
    }
    if !histogram.is_empty() {
        table.push_str("\n# best-gamma counts (sam, per image)\n");
        for (key, count) in &histogram {
            let g: f64 = key.parse().unwrap_or(f64::NAN);
            table.push_str(&format!("gamma {:.4}: {} images\n", g, count));
        }
    }

    write_jsonl(&out.join("report.jsonl"), &rows)?;
    write_atomic(&out.join("report.txt"), table.as_bytes())?;
    let mut manifest = RunManifest::new(
        "report",
        0,
        serde_json::json!({
            "sweep_dir": args.sweep_dir.display().to_string(),
            "inputs": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        }),
    );
    manifest.outputs = vec!["report.jsonl".into(), "report.txt".into()];
    write_manifest(&out, &manifest)?;

    print!("{}", table);
    Ok(())
}
