//! Two-level time segmentation.
//!
//! A calibrated signal is cut into contiguous integration segments of
//! `floor(segment_duration · fs)` samples, and each segment into analysis
//! frames of `window_size` samples advancing by `window_size − overlap`.
//! Truncated tails are dropped at both levels; nothing is zero-filled.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    HammingPeriodic,
    Rectangular,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::HammingPeriodic => "hamming_periodic",
            WindowKind::Rectangular => "rectangular",
        })
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming_periodic" | "hamming" => Ok(WindowKind::HammingPeriodic),
            "rectangular" | "rect" => Ok(WindowKind::Rectangular),
            other => Err(Error::Config(format!("unknown window kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Integration segment length in seconds.
    pub segment_duration: f64,
    /// Analysis window length N in samples.
    pub window_size: usize,
    /// Overlap between consecutive windows, in samples. The overlap ratio is
    /// `window_overlap / window_size`.
    pub window_overlap: usize,
    pub nfft: usize,
    pub window_kind: WindowKind,
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.segment_duration.is_finite() && self.segment_duration > 0.0) {
            return Err(Error::Config(format!(
                "segment_duration must be positive, got {}",
                self.segment_duration
            )));
        }
        if self.window_size == 0 {
            return Err(Error::Config("window_size must be at least 1".into()));
        }
        if self.window_overlap >= self.window_size {
            return Err(Error::Config(format!(
                "window_overlap ({}) must be smaller than window_size ({})",
                self.window_overlap, self.window_size
            )));
        }
        if self.nfft < self.window_size {
            return Err(Error::Config(format!(
                "nfft ({}) must be at least window_size ({})",
                self.nfft, self.window_size
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.window_size - self.window_overlap
    }

    /// Samples per integration segment at `sample_rate`.
    pub fn segment_size(&self, sample_rate: f64) -> Result<usize> {
        segment_size(self.segment_duration, sample_rate)
    }
}

pub fn segment_size(segment_duration: f64, sample_rate: f64) -> Result<usize> {
    if !(segment_duration > 0.0) {
        return Err(Error::Config(format!(
            "segment_duration must be positive, got {segment_duration}"
        )));
    }
    let size = (segment_duration * sample_rate).floor();
    if !(size >= 1.0) {
        return Err(Error::Config(format!(
            "segment of {segment_duration} s at {sample_rate} Hz holds no samples"
        )));
    }
    Ok(size as usize)
}

/// Contiguous, non-overlapping integration segments; the remainder is discarded.
pub fn split_segments(samples: &[f64], segment_size: usize) -> Result<Vec<(usize, &[f64])>> {
    if segment_size == 0 {
        return Err(Error::Config("segment size is zero samples".into()));
    }
    Ok(samples.chunks_exact(segment_size).enumerate().collect())
}

/// Number of whole frames of `window_size` samples fitting in `len` samples.
pub fn frame_count(len: usize, window_size: usize, overlap: usize) -> usize {
    if len < window_size {
        return 0;
    }
    (len - overlap) / (window_size - overlap)
}

/// Cuts `segment` into frames starting at `m · hop`. Returns an empty matrix
/// when the segment is shorter than one window.
pub fn frame_segment(segment: &[f64], window_size: usize, overlap: usize) -> Result<Vec<Vec<f64>>> {
    if window_size == 0 || overlap >= window_size {
        return Err(Error::Config(format!(
            "invalid framing: window_size {window_size}, overlap {overlap}"
        )));
    }
    let hop = window_size - overlap;
    let frames = frame_count(segment.len(), window_size, overlap);
    Ok((0..frames)
        .map(|m| segment[m * hop..m * hop + window_size].to_vec())
        .collect())
}

pub fn make_window(kind: WindowKind, size: usize) -> Result<Vec<f64>> {
    if size == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    Ok(match kind {
        WindowKind::Rectangular => vec![1.0; size],
        WindowKind::HammingPeriodic => {
            let n = size as f64;
            (0..size)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n).cos())
                .collect()
        }
    })
}

/// Elementwise `frame[n] · w[n]` on every frame, in place.
pub fn apply_window(frames: &mut [Vec<f64>], window: &[f64]) -> Result<()> {
    for (m, frame) in frames.iter_mut().enumerate() {
        if frame.len() != window.len() {
            return Err(Error::Shape(format!(
                "frame {m} has {} samples, window has {}",
                frame.len(),
                window.len()
            )));
        }
        for (x, w) in frame.iter_mut().zip(window) {
            *x *= w;
        }
    }
    Ok(())
}

/// Coherent gain: the mean of the window.
pub fn coherent_gain(window: &[f64]) -> f64 {
    window.iter().sum::<f64>() / window.len() as f64
}

/// Noise power bandwidth in bins, `N·Σw² / (Σw)²`.
pub fn noise_power_bandwidth(window: &[f64]) -> Result<f64> {
    let sum: f64 = window.iter().sum();
    let sum_sq: f64 = window.iter().map(|w| w * w).sum();
    if sum_sq == 0.0 || sum == 0.0 {
        return Err(Error::Config(
            "window has zero energy or zero coherent gain".into(),
        ));
    }
    Ok(window.len() as f64 * sum_sq / (sum * sum))
}

/// Windowed analysis frames of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Vec<f64>>,
    pub window: Vec<f64>,
    pub segment_index: usize,
    pub config: SegmentationConfig,
}

impl FrameSet {
    pub fn new(segment: &[f64], segment_index: usize, config: SegmentationConfig) -> Result<Self> {
        config.validate()?;
        let window = make_window(config.window_kind, config.window_size)?;
        let mut frames = frame_segment(segment, config.window_size, config.window_overlap)?;
        apply_window(&mut frames, &window)?;
        Ok(FrameSet {
            frames,
            window,
            segment_index,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
