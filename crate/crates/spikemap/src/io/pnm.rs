//! Portable graymap/pixmap reader and writers (P2/P3 ascii, P5/P6 binary).
//!
//! Only 8-bit depth is supported (maxval up to 255); anything larger is an
//! error rather than a silent rescale. Comments in headers are honored on
//! read and used on write to carry provenance strings.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::Tensor64;

struct TokenReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> TokenReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        TokenReader { bytes, pos: 0 }
    }

    /// Next whitespace-delimited token, skipping '#' comments to end of line.
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return Err(Error::ImageFormat("unexpected end of header".to_string()));
            }
            if self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            let start = self.pos;
            while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            return std::str::from_utf8(&self.bytes[start..self.pos])
                .map_err(|_| Error::ImageFormat("non-utf8 header token".to_string()));
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::ImageFormat(format!("bad {}: {:?}", what, tok)))
    }

    /// Position just past the single whitespace byte that terminates the
    /// header before binary raster data.
    fn raster_start(&self) -> usize {
        self.pos + 1
    }
}

/// Reads a .pgm (1 channel) or .ppm (3 channels) into a [C, H, W] tensor of
/// intensities in 0..=255.
pub fn read_pnm(path: &Path) -> Result<Tensor64> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::ImageFormat(format!("{}: {}", path.display(), e)))?;
    let mut r = TokenReader::new(&bytes);
    let magic = r.token()?.to_string();
    let (channels, binary) = match magic.as_str() {
        "P2" => (1usize, false),
        "P3" => (3, false),
        "P5" => (1, true),
        "P6" => (3, true),
        other => {
            return Err(Error::ImageFormat(format!(
                "{}: unsupported magic {:?}",
                path.display(),
                other
            )))
        }
    };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ImageFormat(format!("{}: empty image", path.display())));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::ImageFormat(format!(
            "{}: maxval {} unsupported, need 1..=255",
            path.display(),
            maxval
        )));
    }
    let count = channels * width * height;
    let mut interleaved = Vec::with_capacity(count);
    if binary {
        let start = r.raster_start();
        let raster = bytes.get(start..start + count).ok_or_else(|| {
            Error::ImageFormat(format!("{}: truncated raster", path.display()))
        })?;
        interleaved.extend(raster.iter().map(|&b| b as f64));
    } else {
        for _ in 0..count {
            let v = r.number("sample")?;
            if v > maxval {
                return Err(Error::ImageFormat(format!(
                    "{}: sample {} exceeds maxval {}",
                    path.display(),
                    v,
                    maxval
                )));
            }
            interleaved.push(v as f64);
        }
    }
    // scale to the 0..=255 convention regardless of declared maxval
    let scale = 255.0 / maxval as f64;
    let mut planar = vec![0.0f64; count];
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                planar[c * height * width + y * width + x] =
                    interleaved[(y * width + x) * channels + c] * scale;
            }
        }
    }
    Tensor64::from_vec(&[channels, height, width], planar)
}

fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn header(magic: &str, comments: &[String], w: usize, h: usize) -> Vec<u8> {
    let mut out = format!("{}\n", magic).into_bytes();
    for c in comments {
        out.extend(format!("# {}\n", c).into_bytes());
    }
    out.extend(format!("{} {}\n255\n", w, h).into_bytes());
    out
}

/// Writes a [H, W] map of 0..=255 intensities as binary .pgm.
pub fn write_pgm(path: &Path, values: &Tensor64, comments: &[String]) -> Result<()> {
    if values.shape().len() != 2 {
        return Err(Error::shape(
            "write_pgm",
            format!("expected [H, W], got {:?}", values.shape()),
        ));
    }
    let (h, w) = (values.shape()[0], values.shape()[1]);
    let mut bytes = header("P5", comments, w, h);
    bytes.extend(values.data().iter().map(|&v| quantize(v)));
    write_atomic(path, &bytes)
}

/// Writes a [3, H, W] image of 0..=255 intensities as binary .ppm.
pub fn write_ppm(path: &Path, values: &Tensor64, comments: &[String]) -> Result<()> {
    if values.shape().len() != 3 || values.shape()[0] != 3 {
        return Err(Error::shape(
            "write_ppm",
            format!("expected [3, H, W], got {:?}", values.shape()),
        ));
    }
    let (h, w) = (values.shape()[1], values.shape()[2]);
    let mut bytes = header("P6", comments, w, h);
    let plane = h * w;
    for i in 0..plane {
        for c in 0..3 {
            bytes.push(quantize(values.data()[c * plane + i]));
        }
    }
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("spikemap-pnm-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn pgm_round_trip() {
        let t = Tensor64::from_vec(&[2, 3], vec![0.0, 10.0, 255.0, 128.0, 7.0, 200.0]).unwrap();
        let p = tmp("roundtrip.pgm");
        write_pgm(&p, &t, &["mode=raw".to_string()]).unwrap();
        let back = read_pnm(&p).unwrap();
        assert_eq!(back.shape(), &[1, 2, 3]);
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn ppm_round_trip_interleaves_correctly() {
        let t = Tensor64::from_vec(
            &[3, 1, 2],
            vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
        )
        .unwrap();
        let p = tmp("roundtrip.ppm");
        write_ppm(&p, &t, &[]).unwrap();
        let back = read_pnm(&p).unwrap();
        assert_eq!(back.shape(), &[3, 1, 2]);
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn ascii_variants_and_comments_parse() {
        let p = tmp("ascii.pgm");
        std::fs::write(&p, b"P2\n# a comment\n2 2\n# another\n255\n0 64\n128 255\n").unwrap();
        let t = read_pnm(&p).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 64.0, 128.0, 255.0]);

        let p3 = tmp("ascii.ppm");
        std::fs::write(&p3, b"P3\n1 1\n255\n255 0 128\n").unwrap();
        let t3 = read_pnm(&p3).unwrap();
        assert_eq!(t3.shape(), &[3, 1, 1]);
        assert_eq!(t3.data(), &[255.0, 0.0, 128.0]);
    }

    #[test]
    fn maxval_rescales_to_byte_range() {
        let p = tmp("maxval.pgm");
        std::fs::write(&p, b"P2\n1 1\n5\n5\n").unwrap();
        let t = read_pnm(&p).unwrap();
        assert_eq!(t.data(), &[255.0]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let p = tmp("bad16.pgm");
        std::fs::write(&p, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(read_pnm(&p).is_err());

        let q = tmp("trunc.pgm");
        std::fs::write(&q, b"P5\n4 4\n255\nab").unwrap();
        assert!(read_pnm(&q).is_err());

        let r = tmp("magic.pbm");
        std::fs::write(&r, b"P1\n1 1\n1\n").unwrap();
        assert!(read_pnm(&r).is_err());
    }
}
