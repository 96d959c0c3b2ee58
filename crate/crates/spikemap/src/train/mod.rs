//! Training: SGD with momentum, step-decay schedule, backpropagation
//! through time for the spiking path, analog training for the conversion
//! source, and the threshold-balancing conversion itself.

mod ann;
mod bptt;
mod convert;
mod optim;
mod session;

pub use ann::{ann_train_step, AnnStepOutput};
pub use bptt::{bptt_step, BpttOutput};
pub use convert::{convert_ann_to_snn, ConversionOptions, ConversionOutcome, ScanRecord};
pub use optim::{default_milestones, SgdMomentum, StepDecay};
pub use session::{
    evaluate_ann, evaluate_snn, train_ann, train_snn, encode_seed_for, TrainConfig, TrainSummary,
};
