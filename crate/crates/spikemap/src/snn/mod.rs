//! Spiking network domain layer: rate encoding, LIF dynamics, per-time-step
//! scale-only batch normalization, network configuration and forward runners.

mod bntt;
mod config;
mod encode;
mod lif;
mod network;

pub use bntt::{BnttCache, BnttLayer};
pub use config::{DataShape, LayerSpec, NetworkConfig};
pub use encode::{poisson_encode, SpikeTrain};
pub use lif::{lif_step, LifParams};
pub use network::{
    DropoutMode, EvalOptions, InputNodes, Layer, Network, RecordKind, SpikeRecord, UnrollMode,
    UnrolledNet,
};
