//! Soundscape metrics for calibrated hydrophone recordings.
//!
//! The workflow reads a metadata CSV listing WAV files and their start times,
//! decodes and calibrates each file, cuts it into integration segments and
//! analysis frames, and computes per segment:
//!
//! - the Welch-averaged power spectral density (μPa²/Hz),
//! - broadband sound pressure level (dB re 1 μPa),
//! - optionally, base-ten third-octave levels (dB re 1 μPa²).
//!
//! Every stage is a plain function over slices; [`pipeline::run`] ties them
//! together over a corpus with a worker pool and ordered output.

// negated float comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod error;
pub mod metadata;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod spectral;

pub use audio::{
    calibrate, read_wav, CalibratedSignal, Calibration, RawAudio, WavHeader, WavReader,
};
pub use error::{Error, Result, TolConfigError};
pub use metadata::{format_iso8601, parse_metadata, parse_timestamp, AudioFileDescriptor};
pub use metrics::{spl, tol, tol_bands, TolBand, TolBandSet};
pub use pipeline::{
    emit_record, run, run_with, MetricRecord, OutputFormat, PipelineConfig, RunSummary,
    SegmentAnalyzer, SpectralResult,
};
pub use segmentation::{
    apply_window, frame_segment, make_window, noise_power_bandwidth, split_segments, FrameSet,
    SegmentationConfig, WindowKind,
};
pub use spectral::{
    one_sided_dft, power_spectrum, psd, welch, PowerSpectrum, PsdVector, Spectrum, WelchVector,
};
