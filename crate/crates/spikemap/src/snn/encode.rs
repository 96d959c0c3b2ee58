//! Poisson rate coding of static images into binary spike trains.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::Tensor64;

/// Binary spike train: one [C,H,W] frame per time step.
#[derive(Debug, Clone)]
pub struct SpikeTrain {
    frames: Vec<Tensor64>,
}

impl SpikeTrain {
    pub fn from_frames(frames: Vec<Tensor64>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("spike_train", "no frames"));
        }
        let shape = frames[0].shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::shape("spike_train", format!("frames must be [C,H,W], got {:?}", shape)));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::shape(
                    "spike_train",
                    format!("frame {} shape {:?} vs {:?}", t, f.shape(), shape),
                ));
            }
            if !f.is_binary() {
                return Err(Error::invalid("spike_train", format!("frame {} is not binary", t)));
            }
        }
        Ok(SpikeTrain { frames })
    }

    pub fn time_steps(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, t: usize) -> &Tensor64 {
        &self.frames[t]
    }

    pub fn frame_shape(&self) -> &[usize] {
        self.frames[0].shape()
    }

    /// Mean spike probability over all frames and pixels.
    pub fn mean_rate(&self) -> f64 {
        let total: f64 = self.frames.iter().map(|f| f.sum()).sum();
        total / (self.frames.len() * self.frames[0].numel()) as f64
    }
}

/// Encodes an image with pixel values in [0, 255] into `time_steps` binary
/// frames. Each (pixel, step) spikes independently with probability
/// pixel/255, so brighter pixels fire proportionally more often.
pub fn poisson_encode(image: &Tensor64, time_steps: usize, seed: u64) -> Result<SpikeTrain> {
    if image.shape().len() != 3 {
        return Err(Error::shape(
            "poisson_encode",
            format!("image must be [C,H,W], got {:?}", image.shape()),
        ));
    }
    if time_steps == 0 {
        return Err(Error::invalid("poisson_encode", "time_steps must be positive"));
    }
    for (i, &v) in image.data().iter().enumerate() {
        if !(0.0..=255.0).contains(&v) {
            return Err(Error::invalid(
                "poisson_encode",
                format!("pixel {} = {} outside [0, 255]", i, v),
            ));
        }
    }
    let mut rng = rng::stream_rng(seed, &[0x504f4953]);
    let n = image.numel();
    let mut frames = Vec::with_capacity(time_steps);
    for _ in 0..time_steps {
        let mut data = Vec::with_capacity(n);
        for &v in image.data().iter() {
            let p = v / 255.0;
            let u: f64 = rng.gen();
            data.push(if u < p { 1.0 } else { 0.0 });
        }
        frames.push(Tensor::from_vec(image.shape(), data)?);
    }
    SpikeTrain::from_frames(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(vals: Vec<f64>) -> Tensor64 {
        Tensor::from_vec(&[1, 1, vals.len()], vals).unwrap()
    }

    #[test]
    fn zero_pixel_never_spikes_and_full_pixel_always_spikes() {
        let img = image(vec![0.0, 255.0]);
        let train = poisson_encode(&img, 200, 7).unwrap();
        for t in 0..200 {
            assert_eq!(train.frame(t).data()[0], 0.0);
            assert_eq!(train.frame(t).data()[1], 1.0);
        }
    }

    #[test]
    fn rate_tracks_pixel_intensity() {
        let img = image(vec![64.0, 128.0, 192.0]);
        let train = poisson_encode(&img, 4000, 11).unwrap();
        let mut counts = [0.0f64; 3];
        for t in 0..4000 {
            for (i, c) in counts.iter_mut().enumerate() {
                *c += train.frame(t).data()[i];
            }
        }
        for (i, &pix) in [64.0, 128.0, 192.0].iter().enumerate() {
            let rate = counts[i] / 4000.0;
            let p = pix / 255.0;
            assert!((rate - p).abs() < 0.03, "pixel {}: rate {} vs p {}", i, rate, p);
        }
    }

    #[test]
    fn encoding_is_deterministic_per_seed() {
        let img = image(vec![100.0, 30.0, 220.0]);
        let a = poisson_encode(&img, 50, 5).unwrap();
        let b = poisson_encode(&img, 50, 5).unwrap();
        let c = poisson_encode(&img, 50, 6).unwrap();
        let mut same_ac = true;
        for t in 0..50 {
            assert_eq!(a.frame(t).data(), b.frame(t).data());
            if a.frame(t).data() != c.frame(t).data() {
                same_ac = false;
            }
        }
        assert!(!same_ac, "different seeds should give different trains");
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(poisson_encode(&image(vec![-1.0]), 5, 0).is_err());
        assert!(poisson_encode(&image(vec![255.5]), 5, 0).is_err());
    }

    #[test]
    fn frames_are_binary() {
        let img = image(vec![10.0, 200.0, 90.0]);
        let train = poisson_encode(&img, 64, 3).unwrap();
        for t in 0..64 {
            assert!(train.frame(t).is_binary());
        }
    }
}
