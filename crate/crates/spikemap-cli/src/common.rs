//! Shared plumbing for the subcommands: dataset resolution, output
//! directories, worker threads, and checkpoint inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use spikemap::dataset::{load_dir, synthetic_shapes, Dataset};
use spikemap::rng::derive_seed;
use spikemap::snn::{LayerSpec, NetworkConfig};

/// Stream label for weight initialization, mixed with the user seed so the
/// same seed can drive init, encoding, and shuffling independently.
pub const INIT_STREAM: u64 = 0x494e4954;
/// Stream label for evaluation-time spike encoding.
pub const EVAL_STREAM: u64 = 0x4556414c;
/// Stream label for the suppression experiment's image pick.
pub const SUPPRESS_STREAM: u64 = 0x53555052;

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory of PGM/PPM images with a labels.txt index. Without it a
    /// synthetic shapes set is generated.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Held-out fraction when splitting a directory dataset.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Synthetic generator: number of classes (2-4).
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Synthetic generator: square image size.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Synthetic generator: training images.
    #[arg(long, default_value_t = 2000)]
    pub train_count: usize,
    /// Synthetic generator: test images (drawn after the training range).
    #[arg(long, default_value_t = 400)]
    pub test_count: usize,
}

impl DataArgs {
    /// (train, test) pair. Synthetic sets use disjoint generator offsets;
    /// directory sets are split by a seeded hash of the file name.
    pub fn load(&self, seed: u64) -> anyhow::Result<(Dataset, Dataset)> {
        match &self.data_dir {
            Some(dir) => {
                let all = load_dir(dir).with_context(|| format!("loading {}", dir.display()))?;
                let (train, test) = all.split(self.test_fraction, seed)?;
                if train.images.is_empty() || test.images.is_empty() {
                    bail!(
                        "split left an empty side ({} train / {} test); adjust --test-fraction",
                        train.images.len(),
                        test.images.len()
                    );
                }
                Ok((train, test))
            }
            None => {
                let train = synthetic_shapes(self.train_count, self.classes, self.size, seed, 0)?;
                let test = synthetic_shapes(
                    self.test_count,
                    self.classes,
                    self.size,
                    seed,
                    self.train_count as u64,
                )?;
                Ok((train, test))
            }
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        match &self.data_dir {
            Some(dir) => serde_json::json!({
                "source": "directory",
                "path": dir.display().to_string(),
                "test_fraction": self.test_fraction,
            }),
            None => serde_json::json!({
                "source": "synthetic",
                "classes": self.classes,
                "size": self.size,
                "train_count": self.train_count,
                "test_count": self.test_count,
            }),
        }
    }
}

/// SPIKEMAP_OUT_DIR overrides the flag when set and non-empty.
pub fn resolve_out_dir(flag: &Path) -> anyhow::Result<PathBuf> {
    let dir = match std::env::var_os("SPIKEMAP_OUT_DIR") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    };
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

/// SPIKEMAP_THREADS caps worker threads for per-image jobs; defaults to 1.
pub fn thread_count() -> usize {
    std::env::var("SPIKEMAP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Applies `f` to every item, possibly on several threads, and returns the
/// results in input order regardless of the thread count.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> anyhow::Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> anyhow::Result<R> + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads);
    let result: anyhow::Result<()> = std::thread::scope(|scope| {
        let f = &f;
        let mut handles = Vec::new();
        for (ci, slots) in out.chunks_mut(chunk).enumerate() {
            let base = ci * chunk;
            handles.push(scope.spawn(move || -> anyhow::Result<()> {
                for (j, cell) in slots.iter_mut().enumerate() {
                    *cell = Some(f(base + j, &items[base + j])?);
                }
                Ok(())
            }));
        }
        for h in handles {
            match h.join() {
                Ok(r) => r?,
                Err(_) => bail!("worker thread panicked"),
            }
        }
        Ok(())
    });
    result?;
    Ok(out.into_iter().map(|o| o.expect("slot filled")).collect())
}

pub fn is_analog(config: &NetworkConfig) -> bool {
    config.layers.iter().any(|l| matches!(l, LayerSpec::Relu))
}

/// Evaluation encoding seed for image `i`, independent of training epochs.
pub fn eval_seed(seed: u64, image_index: usize) -> u64 {
    derive_seed(seed, &[EVAL_STREAM, image_index as u64])
}

/// Parses "0.25" or "4/255" style numbers.
pub fn parse_fraction(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().with_context(|| format!("bad fraction {}", s))?;
        let d: f64 = den.trim().parse().with_context(|| format!("bad fraction {}", s))?;
        if d == 0.0 {
            bail!("zero denominator in {}", s);
        }
        Ok(n / d)
    } else {
        s.parse().with_context(|| format!("bad number {}", s))
    }
}

pub fn parse_fraction_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_fraction).collect()
}
