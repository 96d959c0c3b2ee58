//! Heatmap rendering to portable graymap/pixmap files.
//!
//! Three modes: `Raw` stores clamped values directly, `Normalized` rescales
//! to the full byte range, `Overlay` blends a colormapped heatmap over the
//! source image. The mode and the pre-quantization value range go into the
//! file's comment header, so any consumer can undo the affine transform.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::minmax_normalize;
use crate::interpret::Heatmap;
use crate::io::pnm::{write_pgm, write_ppm};
use crate::Tensor64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMode {
    /// Values written as-is, clamped to 0..=255 at quantization.
    Raw,
    /// Min-max rescaled so the full byte range is used.
    Normalized,
    /// Jet-colormapped map at half opacity over the base image.
    Overlay,
}

impl HeatmapMode {
    pub fn label(&self) -> &'static str {
        match self {
            HeatmapMode::Raw => "raw",
            HeatmapMode::Normalized => "normalized",
            HeatmapMode::Overlay => "overlay",
        }
    }
}

/// The fixed 256-entry jet colormap. Entry i colors normalized value
/// i / 255 with the piecewise-linear jet ramps
/// r = clamp(1.5 - |4x - 3|), g = clamp(1.5 - |4x - 2|),
/// b = clamp(1.5 - |4x - 1|), each scaled to 0..=255.
pub fn jet_table() -> Vec<[u8; 3]> {
    let ramp = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    (0..256)
        .map(|i| {
            let x = i as f64 / 255.0;
            [
                ramp(1.5 - (4.0 * x - 3.0).abs()),
                ramp(1.5 - (4.0 * x - 2.0).abs()),
                ramp(1.5 - (4.0 * x - 1.0).abs()),
            ]
        })
        .collect()
}

fn header_comments(map: &Heatmap, mode: HeatmapMode) -> Vec<String> {
    let mut comments = vec![format!(
        "spikemap heatmap mode={} min={} max={}",
        mode.label(),
        map.values.min_value().unwrap_or(0.0),
        map.values.max_value().unwrap_or(0.0)
    )];
    match map.time_step {
        Some(t) => comments.push(format!("time_step={}", t)),
        None => comments.push("time_step=none".to_string()),
    }
    comments.push(format!("layer={}", map.layer));
    comments
}

/// Writes one heatmap. `base` is required for `Overlay` and must be a
/// [1, H, W] or [3, H, W] image with 0..=255 intensities; the map is
/// bilinearly upsampled to the base resolution before blending.
pub fn export_heatmap(
    path: &Path,
    map: &Heatmap,
    mode: HeatmapMode,
    base: Option<&Tensor64>,
) -> Result<()> {
    let comments = header_comments(map, mode);
    match mode {
        HeatmapMode::Raw => write_pgm(path, &map.values, &comments),
        HeatmapMode::Normalized => {
            // a constant map carries no contrast; render it mid-gray rather
            // than collapsing to black
            let scaled = if map.values.max_value() == map.values.min_value() && map.values.numel() > 0
            {
                Tensor64::filled(map.values.shape(), 127.5)
            } else {
                minmax_normalize(&map.values)?.scale(255.0)
            };
            write_pgm(path, &scaled, &comments)
        }
        HeatmapMode::Overlay => {
            let base = base.ok_or_else(|| {
                Error::invalid("export_heatmap", "overlay mode needs a base image")
            })?;
            if base.shape().len() != 3 || !(base.shape()[0] == 1 || base.shape()[0] == 3) {
                return Err(Error::shape(
                    "export_heatmap",
                    format!("base must be [1|3, H, W], got {:?}", base.shape()),
                ));
            }
            let (h, w) = (base.shape()[1], base.shape()[2]);
            let up = map.upsampled(h, w)?;
            let norm = minmax_normalize(&up.values)?;
            let table = jet_table();
            let plane = h * w;
            let mut out = vec![0.0f64; 3 * plane];
            for i in 0..plane {
                let color = table[(norm.data()[i] * 255.0).round() as usize];
                for c in 0..3 {
                    let b = if base.shape()[0] == 3 {
                        base.data()[c * plane + i]
                    } else {
                        base.data()[i]
                    };
                    out[c * plane + i] = 0.5 * b + 0.5 * color[c] as f64;
                }
            }
            write_ppm(path, &Tensor64::from_vec(&[3, h, w], out)?, &comments)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::pnm::read_pnm;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("spikemap-heatmap-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn map(v: Vec<f64>, h: usize, w: usize) -> Heatmap {
        Heatmap::new(Tensor64::from_vec(&[h, w], v).unwrap(), Some(2)).unwrap()
    }

    #[test]
    fn jet_endpoints_are_blue_and_red() {
        let t = jet_table();
        assert_eq!(t.len(), 256);
        // x = 0: only the blue ramp is active, at height 0.5
        assert_eq!(t[0], [0, 0, 128]);
        // x = 1: only the red ramp is active, at height 0.5
        assert_eq!(t[255], [128, 0, 0]);
        // midpoint saturates green
        assert_eq!(t[128][1], 255);
    }

    #[test]
    fn normalized_constant_map_is_uniform_mid_gray() {
        let p = tmp("const.pgm");
        export_heatmap(&p, &map(vec![3.0; 4], 2, 2), HeatmapMode::Normalized, None).unwrap();
        let back = read_pnm(&p).unwrap();
        assert!(back.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn raw_and_normalized_are_affine_related() {
        let values = vec![10.0, 20.0, 30.0, 40.0];
        let p_raw = tmp("raw.pgm");
        let p_norm = tmp("norm.pgm");
        export_heatmap(&p_raw, &map(values.clone(), 2, 2), HeatmapMode::Raw, None).unwrap();
        export_heatmap(&p_norm, &map(values, 2, 2), HeatmapMode::Normalized, None).unwrap();
        let raw = read_pnm(&p_raw).unwrap();
        let norm = read_pnm(&p_norm).unwrap();
        // norm = (raw - 10) / 30 * 255, then rounded
        for (&r, &n) in raw.data().iter().zip(norm.data().iter()) {
            let expect = ((r - 10.0) / 30.0 * 255.0).round();
            assert_eq!(n, expect);
        }
    }

    #[test]
    fn overlay_blends_and_upsamples() {
        let base = Tensor64::filled(&[1, 4, 4], 100.0);
        let p = tmp("overlay.ppm");
        export_heatmap(
            &p,
            &map(vec![0.0, 1.0, 1.0, 0.0], 2, 2),
            HeatmapMode::Overlay,
            Some(&base),
        )
        .unwrap();
        let back = read_pnm(&p).unwrap();
        assert_eq!(back.shape(), &[3, 4, 4]);
    }

    #[test]
    fn header_records_mode_and_range() {
        let p = tmp("hdr.pgm");
        export_heatmap(&p, &map(vec![1.0, 5.0, 2.0, 0.5], 2, 2), HeatmapMode::Raw, None).unwrap();
        let text = std::fs::read(&p).unwrap();
        let head = String::from_utf8_lossy(&text[..80]);
        assert!(head.contains("mode=raw"));
        assert!(head.contains("min=0.5"));
        assert!(head.contains("max=5"));
        assert!(head.contains("time_step=2"));
    }
}
