//! Network configuration: an ordered list of layer specs plus global
//! temporal parameters. Configurations serialize to JSON and are embedded
//! in checkpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool },
    Linear { out_features: usize, bias: bool },
    AvgPool { kernel: usize },
    Flatten,
    Relu,
    Dropout { p: f64 },
    Bntt,
    Lif { leak: f64, threshold: f64 },
    /// Accumulating readout: integrates the incoming logits over time with
    /// leak 1 and never fires. Must be the final layer.
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Input shape [channels, height, width].
    pub input: [usize; 3],
    pub classes: usize,
    pub time_steps: usize,
    /// Surrogate gradient slope.
    pub beta: f64,
    pub init_seed: u64,
    pub layers: Vec<LayerSpec>,
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataShape {
    Map { channels: usize, height: usize, width: usize },
    Flat { features: usize },
}

impl DataShape {
    pub fn channels(&self) -> usize {
        match self {
            DataShape::Map { channels, .. } => *channels,
            DataShape::Flat { features } => *features,
        }
    }
}

impl NetworkConfig {
    /// Validates the layer sequence and returns the output shape of every
    /// layer, in order.
    pub fn layer_shapes(&self) -> Result<Vec<DataShape>> {
        if self.classes < 2 {
            return Err(Error::invalid("config", "need at least 2 classes"));
        }
        if self.time_steps == 0 {
            return Err(Error::invalid("config", "time_steps must be positive"));
        }
        // beta = 0 closes the surrogate gate entirely; useful as a
        // diagnostic, so only negative or non-finite values are rejected.
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("config", format!("beta {} must be non-negative", self.beta)));
        }
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::invalid("config", format!("input shape {:?} has a zero extent", self.input)));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid("config", "no layers"));
        }

        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = DataShape::Map {
            channels: self.input[0],
            height: self.input[1],
            width: self.input[2],
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let is_last = i + 1 == self.layers.len();
            match layer {
                LayerSpec::Conv { out_channels, kernel, stride, padding, .. } => {
                    let (c, h, w) = match cur {
                        DataShape::Map { channels, height, width } => (channels, height, width),
                        DataShape::Flat { .. } => {
                            return Err(Error::invalid(
                                "config",
                                format!("layer {}: conv after flatten", i),
                            ))
                        }
                    };
                    let _ = c;
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: conv extents must be positive", i),
                        ));
                    }
                    let ph = h + 2 * padding;
                    let pw = w + 2 * padding;
                    if ph < *kernel || pw < *kernel {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: kernel {} exceeds padded input {}x{}", i, kernel, ph, pw),
                        ));
                    }
                    cur = DataShape::Map {
                        channels: *out_channels,
                        height: (ph - kernel) / stride + 1,
                        width: (pw - kernel) / stride + 1,
                    };
                }
                LayerSpec::Linear { out_features, .. } => {
                    match cur {
                        DataShape::Flat { .. } => {}
                        DataShape::Map { .. } => {
                            return Err(Error::invalid(
                                "config",
                                format!("layer {}: linear requires flattened input", i),
                            ))
                        }
                    }
                    if *out_features == 0 {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: linear needs positive out_features", i),
                        ));
                    }
                    cur = DataShape::Flat { features: *out_features };
                }
                LayerSpec::AvgPool { kernel } => {
                    let (c, h, w) = match cur {
                        DataShape::Map { channels, height, width } => (channels, height, width),
                        DataShape::Flat { .. } => {
                            return Err(Error::invalid(
                                "config",
                                format!("layer {}: pool after flatten", i),
                            ))
                        }
                    };
                    if *kernel == 0 || h % kernel != 0 || w % kernel != 0 {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: pool kernel {} does not divide {}x{}", i, kernel, h, w),
                        ));
                    }
                    cur = DataShape::Map { channels: c, height: h / kernel, width: w / kernel };
                }
                LayerSpec::Flatten => {
                    let features = match cur {
                        DataShape::Map { channels, height, width } => channels * height * width,
                        DataShape::Flat { features } => features,
                    };
                    cur = DataShape::Flat { features };
                }
                LayerSpec::Relu => {}
                LayerSpec::Dropout { p } => {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: dropout p {} outside [0, 1)", i, p),
                        ));
                    }
                }
                LayerSpec::Bntt => {
                    let ok = i > 0
                        && matches!(
                            self.layers[i - 1],
                            LayerSpec::Conv { .. } | LayerSpec::Linear { .. }
                        );
                    if !ok {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: bntt must directly follow conv or linear", i),
                        ));
                    }
                }
                LayerSpec::Lif { leak, threshold } => {
                    if !(0.0..=1.0).contains(leak) {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: leak {} outside [0, 1]", i, leak),
                        ));
                    }
                    if !(threshold.is_finite() && *threshold > 0.0) {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: threshold {} must be positive and finite", i, threshold),
                        ));
                    }
                }
                LayerSpec::Output => {
                    if !is_last {
                        return Err(Error::invalid(
                            "config",
                            format!("layer {}: output must be the final layer", i),
                        ));
                    }
                    match cur {
                        DataShape::Flat { features } if features == self.classes => {}
                        ref other => {
                            return Err(Error::invalid(
                                "config",
                                format!(
                                    "output expects {} flat logits, got {:?}",
                                    self.classes, other
                                ),
                            ))
                        }
                    }
                }
            }
            shapes.push(cur.clone());
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Output)) {
            return Err(Error::invalid("config", "final layer must be the output accumulator"));
        }
        Ok(shapes)
    }

    /// Indices of the Lif layers, in order.
    pub fn lif_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Lif { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Spiking conv+BNTT classifier used throughout the experiments:
    /// three conv/BNTT/LIF stages with average pooling, then a linear
    /// readout into the accumulator.
    pub fn snn_preset(
        input: [usize; 3],
        classes: usize,
        time_steps: usize,
        leak: f64,
        threshold: f64,
        beta: f64,
        init_seed: u64,
    ) -> Self {
        let lif = LayerSpec::Lif { leak, threshold };
        NetworkConfig {
            input,
            classes,
            time_steps,
            beta,
            init_seed,
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3, stride: 1, padding: 1, bias: false },
                LayerSpec::Bntt,
                lif.clone(),
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, padding: 1, bias: false },
                LayerSpec::Bntt,
                lif.clone(),
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, padding: 1, bias: false },
                LayerSpec::Bntt,
                lif,
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: classes, bias: true },
                LayerSpec::Output,
            ],
        }
    }

    /// Non-spiking counterpart of the preset, used for training the source
    /// network of the conversion pipeline and as the attribution reference.
    pub fn ann_preset(input: [usize; 3], classes: usize, init_seed: u64) -> Self {
        NetworkConfig {
            input,
            classes,
            // Time parameters are irrelevant for the analog forward pass but
            // kept so the config type stays uniform.
            time_steps: 1,
            beta: 0.3,
            init_seed,
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3, stride: 1, padding: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, padding: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1, padding: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dropout { p: 0.2 },
                LayerSpec::Linear { out_features: classes, bias: true },
                LayerSpec::Output,
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes_check_out() {
        let cfg = NetworkConfig::snn_preset([1, 32, 32], 4, 20, 0.99, 1.0, 0.3, 0);
        let shapes = cfg.layer_shapes().unwrap();
        assert_eq!(shapes.last(), Some(&DataShape::Flat { features: 4 }));
        assert_eq!(cfg.lif_layer_indices(), vec![2, 6, 10]);
        // After the third pool: 16 channels at 4x4.
        assert_eq!(
            shapes[11],
            DataShape::Map { channels: 16, height: 4, width: 4 }
        );
    }

    #[test]
    fn ann_preset_validates() {
        let cfg = NetworkConfig::ann_preset([1, 32, 32], 4, 1);
        assert!(cfg.layer_shapes().is_ok());
    }

    #[test]
    fn output_must_be_last() {
        let mut cfg = NetworkConfig::snn_preset([1, 32, 32], 4, 20, 0.99, 1.0, 0.3, 0);
        cfg.layers.push(LayerSpec::Relu);
        assert!(cfg.layer_shapes().is_err());
    }

    #[test]
    fn linear_requires_flatten_first() {
        let cfg = NetworkConfig {
            input: [1, 4, 4],
            classes: 2,
            time_steps: 2,
            beta: 0.3,
            init_seed: 0,
            layers: vec![LayerSpec::Linear { out_features: 2, bias: true }, LayerSpec::Output],
        };
        assert!(cfg.layer_shapes().is_err());
    }

    #[test]
    fn pool_divisibility_is_checked() {
        let cfg = NetworkConfig {
            input: [1, 5, 5],
            classes: 2,
            time_steps: 2,
            beta: 0.3,
            init_seed: 0,
            layers: vec![
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 2, bias: true },
                LayerSpec::Output,
            ],
        };
        assert!(cfg.layer_shapes().is_err());
    }

    #[test]
    fn bntt_placement_is_checked() {
        let cfg = NetworkConfig {
            input: [1, 4, 4],
            classes: 2,
            time_steps: 2,
            beta: 0.3,
            init_seed: 0,
            layers: vec![
                LayerSpec::Bntt,
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 2, bias: true },
                LayerSpec::Output,
            ],
        };
        assert!(cfg.layer_shapes().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = NetworkConfig::snn_preset([1, 32, 32], 4, 20, 0.99, 1.0, 0.3, 123);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn classes_must_match_readout() {
        let mut cfg = NetworkConfig::snn_preset([1, 32, 32], 4, 20, 0.99, 1.0, 0.3, 0);
        cfg.classes = 5;
        assert!(cfg.layer_shapes().is_err());
    }
}
