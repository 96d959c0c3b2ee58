//! Labeled image sets: a synthetic shapes generator for self-contained
//! experiments and a loader for portable graymap/pixmap directories.
//!
//! Pixels are stored in the 0..=255 range as f64 (the Poisson encoder
//! divides by 255 itself); `unit_batch` rescales to [0, 1] for the analog
//! network.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{self, fnv1a_hash};
use crate::Tensor64;

#[derive(Debug, Clone)]
pub struct Image {
    /// [C, H, W] intensities in 0..=255.
    pub pixels: Tensor64,
    pub label: usize,
    /// Stable identifier; file stem for loaded images, generated for
    /// synthetic ones. Drives the train/test split hash.
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub classes: usize,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Stacks the selected images into a unit-range [N, C, H, W] batch.
    pub fn unit_batch(&self, indices: &[usize]) -> Result<(Tensor64, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::Dataset("empty batch".to_string()));
        }
        let first = &self.images[indices[0]].pixels;
        let per = first.numel();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let img = self.images.get(i).ok_or_else(|| {
                Error::Dataset(format!("image index {} out of range", i))
            })?;
            if img.pixels.shape() != first.shape() {
                return Err(Error::Dataset(format!(
                    "image {} has shape {:?}, batch expects {:?}",
                    img.name,
                    img.pixels.shape(),
                    first.shape()
                )));
            }
            data.extend(img.pixels.data().iter().map(|&v| v / 255.0));
            labels.push(img.label);
        }
        Ok((Tensor64::from_vec(&shape, data)?, labels))
    }

    /// Splits by a seeded hash of the image name, so membership is stable
    /// under reordering and independent of dataset size.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&test_fraction) {
            return Err(Error::Dataset(format!(
                "test fraction {} outside [0, 1]",
                test_fraction
            )));
        }
        let cut = (test_fraction * u64::MAX as f64) as u64;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for img in &self.images {
            if fnv1a_hash(seed, img.name.as_bytes()) < cut {
                test.push(img.clone());
            } else {
                train.push(img.clone());
            }
        }
        Ok((
            Dataset { images: train, classes: self.classes, class_names: self.class_names.clone() },
            Dataset { images: test, classes: self.classes, class_names: self.class_names.clone() },
        ))
    }
}

const SHAPE_NAMES: [&str; 4] = ["circle", "square", "triangle", "cross"];

/// Generates `count` single-channel shape images of the given resolution.
///
/// Labels cycle through the classes, so every prefix is near-balanced.
/// Image `i` draws from its own random stream keyed by `offset + i`,
/// making disjoint train/test sets a matter of disjoint offsets and the
/// whole set reproducible from (seed, offset, count).
pub fn synthetic_shapes(
    count: usize,
    classes: usize,
    size: usize,
    seed: u64,
    offset: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Dataset("synthetic set needs at least one image".to_string()));
    }
    if !(2..=SHAPE_NAMES.len()).contains(&classes) {
        return Err(Error::Dataset(format!(
            "synthetic generator supports 2..={} classes, got {}",
            SHAPE_NAMES.len(),
            classes
        )));
    }
    if size < 16 {
        return Err(Error::Dataset(format!("resolution {} too small, need at least 16", size)));
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % classes;
        let index = offset + i as u64;
        let mut r = rng::stream_rng(seed, &[0x53594e54, index]);
        let pixels = render_shape(label, size, &mut r)?;
        images.push(Image { pixels, label, name: format!("synthetic_{:06}", index) });
    }
    Ok(Dataset {
        images,
        classes,
        class_names: SHAPE_NAMES[..classes].iter().map(|s| s.to_string()).collect(),
    })
}

fn render_shape(label: usize, size: usize, r: &mut impl rand::Rng) -> Result<Tensor64> {
    let s = size as f64;
    // free placement and moderate scale, bright foreground on a dark
    // speckled field; keeping the shape well inside one region of the
    // canvas is what gives attribution maps something to localize
    let half = s * r.gen_range(0.14..0.22);
    let lo = half / s + 0.03;
    let cx = s * r.gen_range(lo..1.0 - lo);
    let cy = s * r.gen_range(lo..1.0 - lo);
    let fg: f64 = r.gen_range(150.0..240.0);
    let mut px = vec![0.0f64; size * size];

    let mut paint = |x: usize, y: usize| {
        px[y * size + x] = fg;
    };
    match label {
        0 => {
            for y in 0..size {
                for x in 0..size {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    if dx * dx + dy * dy <= half * half {
                        paint(x, y);
                    }
                }
            }
        }
        1 => {
            for y in 0..size {
                for x in 0..size {
                    let dx = (x as f64 + 0.5 - cx).abs();
                    let dy = (y as f64 + 0.5 - cy).abs();
                    if dx <= half && dy <= half {
                        paint(x, y);
                    }
                }
            }
        }
        2 => {
            // upward triangle: width grows linearly from apex to base
            for y in 0..size {
                let fy = y as f64 + 0.5;
                let rel = (fy - (cy - half)) / (2.0 * half);
                if !(0.0..=1.0).contains(&rel) {
                    continue;
                }
                let reach = rel * half;
                for x in 0..size {
                    if (x as f64 + 0.5 - cx).abs() <= reach {
                        paint(x, y);
                    }
                }
            }
        }
        3 => {
            let bar = (half * 0.45).max(1.5);
            for y in 0..size {
                for x in 0..size {
                    let dx = (x as f64 + 0.5 - cx).abs();
                    let dy = (y as f64 + 0.5 - cy).abs();
                    if (dx <= bar && dy <= half) || (dy <= bar && dx <= half) {
                        paint(x, y);
                    }
                }
            }
        }
        _ => return Err(Error::Dataset(format!("no shape for label {}", label))),
    }

    // sparse background speckle keeps the task from degenerating into
    // counting lit pixels
    let speckles = (size * size) / 25;
    for _ in 0..speckles {
        let x = r.gen_range(0..size);
        let y = r.gen_range(0..size);
        if px[y * size + x] == 0.0 {
            px[y * size + x] = r.gen_range(20.0..90.0);
        }
    }
    Tensor64::from_vec(&[1, size, size], px)
}

/// Loads a directory of .pgm/.ppm images described by a labels.txt file.
///
/// labels.txt holds one `<filename> <class-index>` pair per line; blank
/// lines and lines starting with '#' are skipped. An optional leading
/// `classes <name> <name> ...` line names the classes. Every image file in
/// the directory must be listed and every listed file must exist.
pub fn load_dir(path: &Path) -> Result<Dataset> {
    let labels_path = path.join("labels.txt");
    if !labels_path.is_file() {
        return Err(Error::Dataset(format!("{} has no labels.txt", path.display())));
    }
    let text = std::fs::read_to_string(&labels_path)?;
    let mut class_names: Vec<String> = Vec::new();
    let mut wanted: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().expect("non-empty line has a first token");
        if head == "classes" {
            class_names = parts.map(|s| s.to_string()).collect();
            continue;
        }
        let label: usize = parts
            .next()
            .ok_or_else(|| {
                Error::Dataset(format!("labels.txt line {}: missing label", lineno + 1))
            })?
            .parse()
            .map_err(|_| {
                Error::Dataset(format!("labels.txt line {}: label is not a number", lineno + 1))
            })?;
        if wanted.insert(head.to_string(), label).is_some() {
            return Err(Error::Dataset(format!("duplicate labels.txt entry for {}", head)));
        }
    }
    if wanted.is_empty() {
        return Err(Error::Dataset(format!("{} lists no images", labels_path.display())));
    }

    let mut present: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.ends_with(".pgm") || name.ends_with(".ppm") {
            present.push(name);
        }
    }
    present.sort();
    if present.is_empty() {
        return Err(Error::Dataset(format!("{} contains no .pgm/.ppm images", path.display())));
    }
    for name in wanted.keys() {
        if !present.iter().any(|p| p == name) {
            return Err(Error::Dataset(format!(
                "labels.txt names {} but the file does not exist",
                name
            )));
        }
    }

    let mut images = Vec::with_capacity(present.len());
    let mut max_label = 0usize;
    for name in &present {
        let label = *wanted.get(name).ok_or_else(|| {
            Error::Dataset(format!("{} has no entry in labels.txt", name))
        })?;
        max_label = max_label.max(label);
        let pixels = crate::io::pnm::read_pnm(&path.join(name))?;
        let stem = name.trim_end_matches(".pgm").trim_end_matches(".ppm").to_string();
        images.push(Image { pixels, label, name: stem });
    }
    let classes = max_label + 1;
    if class_names.is_empty() {
        class_names = (0..classes).map(|c| c.to_string()).collect();
    } else if class_names.len() != classes {
        return Err(Error::Dataset(format!(
            "labels use {} classes but the classes line names {}",
            classes,
            class_names.len()
        )));
    }
    Ok(Dataset { images, classes, class_names })
}
