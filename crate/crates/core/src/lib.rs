//! Curriculum-paced, weakly supervised modality correlation learning.
//!
//! The crate is `no_std` with `alloc`. It holds the numerical substrate
//! ([`numerics`]), per-modality encoders, bimodal pair construction with
//! label-derived correlation targets, the linear correlation predictor and
//! its losses, the difficulty scorer and three-action pair feeder, the joint
//! trainer, and a synthetic latent-factor dataset generator. File formats,
//! configuration files and the command line live in the `corrcurr` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod config;
pub mod correlation;
pub mod curriculum;
pub mod encoders;
pub mod error;
pub mod numerics;
pub mod pairing;
pub mod report;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use config::{Ablations, CurriculumConfig, ModelConfig, TrainConfig};
pub use error::{Error, Result};
pub use report::RunReport;
pub use synth::{SampleBatch, SynthConfig, SynthDataset};
