//! Electrode-shift robust EMG motion classification.
//!
//! The crate covers the whole chain from raw multi-channel EMG to evaluated
//! classifiers: band-pass filtering and decimation, sliding-window
//! normalization, segmented feature frames, synthetic target-tracking tasks
//! and motion labels, a CNN-LSTM trained from scratch with focal loss and an
//! optional adversarial domain head, and the cross-position evaluation
//! protocol with rank-sum statistics.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kinematics;
pub mod labeling;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
