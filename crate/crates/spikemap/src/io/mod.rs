//! Persistence: images, checkpoints, heatmap renders, spike rasters, and
//! line-oriented reports. Every writer goes through `write_atomic` so a
//! crashed run never leaves a torn file behind.

pub mod checkpoint;
pub mod heatmap;
pub mod pnm;
pub mod raster;
pub mod report;

use std::path::Path;

use crate::error::Result;

/// Writes to a sibling temporary file, then renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{}.tmp", file_name));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
