//! Bayesian end-to-end steering: a dropout CNN regressing road curvature
//! from synthetic camera frames, Monte-Carlo dropout uncertainty, and an
//! uncertainty-weighted human/network shared controller.

mod binio;
pub mod checkpoint;
pub mod dropout;
pub mod error;
pub mod kv;
pub mod mc;
pub mod net;
pub mod pa;
pub mod report;
pub mod seed;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod wire;

pub use dropout::{apply_dropout, sample_elementwise_mask, sample_spatial_mask, DropoutKind, DropoutMask, DropoutSpec};
pub use error::{Error, Result};
pub use mc::{mc_sample, predictive_mean, predictive_variance, McConfig, McEstimate};
pub use net::{LabelScaler, Mode, Network, NetworkConfig, TrainConfig, TrainLog};
pub use pa::{fuse, run_closed_loop, FusionConfig, HumanSource, ScriptedHuman, SimConfig, StepRecord, VehicleState};
pub use synth::{Dataset, Frame, ImageConfig, Track, TrackConfig};
pub use tape::{sgd_step, Parameter, Tape};
pub use tensor::Tensor;
