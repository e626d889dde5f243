//! One-sided power spectra, density-normalized PSD and Welch averaging.
//!
//! Frame PSD is `2·|X[k]|² / (fs · Σw²)` with the factor 2 omitted at DC and,
//! for even `nfft`, at Nyquist. This is identical to normalizing the
//! amplitude-corrected power spectrum `|X/(Nα)|²` by the noise power bandwidth
//! `B = Σw²/(Nα²)` and bin width `Δf = fs/N`: the coherent gain α cancels.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Number of non-negative-frequency bins of a length-`nfft` DFT.
pub fn one_sided_len(nfft: usize) -> usize {
    nfft / 2 + 1
}

/// Non-negative-frequency half of a DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<Complex64>,
    pub nfft: usize,
}

/// Unnormalized one-sided power `|X[k]|²`, doubled off DC and Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub values: Vec<f64>,
    pub nfft: usize,
}

/// Power spectral density in μPa²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdVector {
    pub values: Vec<f64>,
    pub frequency_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelchVector {
    pub values: Vec<f64>,
    pub n_frames_averaged: usize,
}

/// Planned real-input transform of a fixed length.
#[derive(Clone)]
pub struct FrameTransform {
    fft: Arc<dyn Fft<f64>>,
    nfft: usize,
}

impl std::fmt::Debug for FrameTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameTransform")
            .field("nfft", &self.nfft)
            .finish()
    }
}

impl FrameTransform {
    pub fn new(nfft: usize) -> Result<Self> {
        if nfft == 0 {
            return Err(Error::Config("nfft must be at least 1".into()));
        }
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Ok(FrameTransform { fft, nfft })
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    /// Zero-pads `frame` to `nfft` and returns bins `0..=nfft/2`.
    pub fn one_sided(&self, frame: &[f64], scratch: &mut Vec<Complex64>) -> Result<Spectrum> {
        if frame.len() > self.nfft {
            return Err(Error::Config(format!(
                "nfft ({}) is shorter than the frame ({})",
                self.nfft,
                frame.len()
            )));
        }
        scratch.clear();
        scratch.extend(frame.iter().map(|&x| Complex64::new(x, 0.0)));
        scratch.resize(self.nfft, Complex64::new(0.0, 0.0));
        self.fft.process(scratch);
        Ok(Spectrum {
            values: scratch[..one_sided_len(self.nfft)].to_vec(),
            nfft: self.nfft,
        })
    }
}

pub fn one_sided_dft(frame: &[f64], nfft: usize) -> Result<Spectrum> {
    if nfft < frame.len() {
        return Err(Error::Config(format!(
            "nfft ({nfft}) is shorter than the frame ({})",
            frame.len()
        )));
    }
    FrameTransform::new(nfft)?.one_sided(frame, &mut Vec::with_capacity(nfft))
}

pub fn power_spectrum(spec: &Spectrum) -> PowerSpectrum {
    let k = spec.values.len();
    // odd nfft has no Nyquist bin
    let doubled_end = if spec.nfft.is_multiple_of(2) {
        k.saturating_sub(1)
    } else {
        k
    };
    let values = spec
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let p = x.norm_sqr();
            if i > 0 && i < doubled_end {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    PowerSpectrum {
        values,
        nfft: spec.nfft,
    }
}

/// `1 / (fs · Σw²)`, the factor turning one-sided power into density.
pub fn psd_norm_factor(sample_rate: f64, window: &[f64]) -> Result<f64> {
    let energy: f64 = window.iter().map(|w| w * w).sum();
    if energy == 0.0 {
        return Err(Error::Config("window has zero energy".into()));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::Config(format!("invalid sample rate {sample_rate}")));
    }
    Ok(1.0 / (sample_rate * energy))
}

pub fn psd(power: &PowerSpectrum, sample_rate: f64, window: &[f64]) -> Result<PsdVector> {
    let norm = psd_norm_factor(sample_rate, window)?;
    Ok(PsdVector {
        values: power.values.iter().map(|p| p * norm).collect(),
        frequency_step: sample_rate / power.nfft as f64,
    })
}

/// Running linear-space mean of equally sized rows, summed in arrival order.
#[derive(Debug, Clone)]
pub struct WelchAccumulator {
    sum: Vec<f64>,
    count: usize,
}

impl WelchAccumulator {
    pub fn new(len: usize) -> Self {
        WelchAccumulator {
            sum: vec![0.0; len],
            count: 0,
        }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.sum.len() {
            return Err(Error::Shape(format!(
                "PSD row has {} bins, expected {}",
                row.len(),
                self.sum.len()
            )));
        }
        for (s, v) in self.sum.iter_mut().zip(row) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<WelchVector> {
        if self.count == 0 {
            return Err(Error::EmptySegment);
        }
        let m = self.count as f64;
        Ok(WelchVector {
            values: self.sum.into_iter().map(|s| s / m).collect(),
            n_frames_averaged: self.count,
        })
    }
}

/// Elementwise mean over the rows of an M × K matrix.
pub fn welch<R: AsRef<[f64]>>(psds: &[R]) -> Result<WelchVector> {
    let first = psds.first().ok_or(Error::EmptySegment)?;
    let mut acc = WelchAccumulator::new(first.as_ref().len());
    for row in psds {
        acc.push(row.as_ref())?;
    }
    acc.finish()
}
