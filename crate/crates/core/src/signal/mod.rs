//! Streaming EMG preprocessing.

pub mod buffer;
pub mod features;
pub mod filter;
pub mod io;
pub mod pipeline;
pub mod swn;

pub use buffer::SignalBuffer;
pub use features::{rectify, segment_and_concat, FeatureFrame};
pub use filter::{decimate, design_bandpass, filter_stream, FilterSpec, SosCascade};
pub use pipeline::{preprocess, run_pipeline, PipelineConfig, ProcessedStream, StreamingPipeline};
pub use swn::{swn, SwnConfig, SwnMode};

/// Raw acquisition rate of the EMG amplifier.
pub const RAW_RATE_HZ: f64 = 2000.0;
/// Working rate after decimation.
pub const WORK_RATE_HZ: f64 = 500.0;
/// Frame emission rate, matched to the motion-capture rate.
pub const FRAME_RATE_HZ: f64 = 20.0;
