//! Text export of spike events from a recorded forward pass.
//!
//! One line per spike, in (layer, step, channel, row, column) order, so the
//! output is deterministic for a fixed record and diffable across runs.
//! Flat stages list the feature index in the channel column with row and
//! column zero.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::snn::SpikeRecord;
use crate::tensor::offset4;

pub fn raster_text(record: &SpikeRecord) -> Result<String> {
    let mut out = String::new();
    out.push_str("# spike raster: layer step channel row col\n");
    for (pos, per_t) in record.spikes.iter().enumerate() {
        if per_t.len() != record.time_steps {
            return Err(Error::invalid(
                "raster",
                "record lacks spike frames; rerun the forward pass with spike recording on",
            ));
        }
        let layer = record.lif_layers[pos];
        for (t, frame) in per_t.iter().enumerate() {
            let shape = frame.shape();
            match shape.len() {
                4 => {
                    if shape[0] != 1 {
                        return Err(Error::invalid("raster", "raster export needs batch size 1"));
                    }
                    for c in 0..shape[1] {
                        for y in 0..shape[2] {
                            for x in 0..shape[3] {
                                if frame.data()[offset4(shape, 0, c, y, x)] != 0.0 {
                                    writeln!(out, "{} {} {} {} {}", layer, t, c, y, x)
                                        .expect("string write");
                                }
                            }
                        }
                    }
                }
                2 => {
                    if shape[0] != 1 {
                        return Err(Error::invalid("raster", "raster export needs batch size 1"));
                    }
                    for f in 0..shape[1] {
                        if frame.data()[f] != 0.0 {
                            writeln!(out, "{} {} {} 0 0", layer, t, f).expect("string write");
                        }
                    }
                }
                other => {
                    return Err(Error::shape(
                        "raster",
                        format!("unsupported spike frame rank {}", other),
                    ))
                }
            }
        }
    }
    Ok(out)
}

pub fn write_raster(path: &Path, record: &SpikeRecord) -> Result<()> {
    write_atomic(path, raster_text(record)?.as_bytes())
}
