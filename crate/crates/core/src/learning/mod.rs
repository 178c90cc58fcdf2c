//! Networks, permutation-invariant training and checkpoints.

pub mod binarize;
pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod pit;
pub mod shared;
pub mod toynet;
pub mod train;

pub use binarize::{binarize, DetectedEvent};
pub use checkpoint::Checkpoint;
pub use optim::{AdamW, LrSchedule};
pub use params::{ParamSet, Tensor};
pub use pit::{pit_loss, LossConfig, PitResult};
pub use shared::{batch_gradients, TrackwiseModel};
pub use toynet::{ToyNet, ToyNetConfig};
pub use train::{train, Example, TrainConfig, TrainReport, ValClip};
