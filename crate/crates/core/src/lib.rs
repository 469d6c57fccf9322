//! Robust heartbeat detection in multimodal physiological records.
//!
//! The ECG and every pressure/volume channel are run through several beat detectors.
//! A three-step quality assessment decides, per 5 s window, whether the ECG can be
//! trusted on its own; where it cannot, the detection sets of all eligible channels are
//! scored and the best one is kept. A final RR-driven pass repairs window seams.

pub mod alignment;
pub mod detectors;
pub mod dsp;
pub mod evaluation;
pub mod fusion;
pub mod pipeline;
pub mod preprocess;
pub mod quality;
pub mod searchback;
pub mod signal_io;
pub mod synth;

pub use detectors::{DetectionSet, DetectorId};
pub use pipeline::{run_record, PipelineConfig, PipelineOutcome};
pub use signal_io::{Annotation, Channel, Record, SignalKind};
