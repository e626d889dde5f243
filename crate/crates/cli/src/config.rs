//! Run configuration file.
//!
//! A TOML file of `key = value` pairs. Every key is optional in the file, but
//! `metadata_path`, `audio_dir`, `output_path`, `sensitivity_db`,
//! `segment_duration` and `window_size` must be set by the file or the command
//! line. Relative paths in the file resolve against the file's directory.
//!
//! ```toml
//! metadata_path = "metadata.csv"
//! audio_dir = "wav"
//! output_path = "metrics.ndjson"
//! sensitivity_db = -169.5
//! segment_duration = 60.0
//! window_size = 1500
//! window_overlap = 0          # samples
//! nfft = 1500                 # defaults to window_size
//! window_kind = "hamming_periodic"  # or "rectangular"
//! tol_enabled = true
//! tol_low_freq = 1.0
//! tol_high_freq = 750.0       # defaults to fs/2
//! worker_count = 8            # defaults to available cores
//! format = "ndjson"           # or "csv"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use soundscape_core::pipeline::{default_worker_count, OutputFormat, PipelineConfig};
use soundscape_core::WindowKind;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub metadata_path: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub sensitivity_db: Option<f64>,
    pub segment_duration: Option<f64>,
    pub window_size: Option<usize>,
    pub window_overlap: Option<usize>,
    pub nfft: Option<usize>,
    pub window_kind: Option<WindowKind>,
    pub tol_enabled: Option<bool>,
    pub tol_low_freq: Option<f64>,
    pub tol_high_freq: Option<f64>,
    pub worker_count: Option<usize>,
    pub format: Option<String>,
}

/// Values given on the command line; these win over the file.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Overrides {
    pub metadata_path: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub worker_count: Option<usize>,
    pub format: Option<OutputFormat>,
    pub tol: Option<(f64, f64)>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.metadata_path,
            &mut config.audio_dir,
            &mut config.output_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn resolve(self, overrides: Overrides) -> Result<PipelineConfig> {
        fn required<T>(value: Option<T>, key: &str) -> Result<T> {
            value.ok_or_else(|| anyhow!("missing required setting `{key}`"))
        }
        let window_size = required(self.window_size, "window_size")?;
        let format = match (overrides.format, self.format) {
            (Some(f), _) => f,
            (None, Some(s)) => s.parse()?,
            (None, None) => OutputFormat::Ndjson,
        };
        let (tol_enabled, tol_low_freq, tol_high_freq) = match overrides.tol {
            Some((low, high)) => (true, low, Some(high)),
            None => (
                self.tol_enabled.unwrap_or(false),
                self.tol_low_freq.unwrap_or(1.0),
                self.tol_high_freq,
            ),
        };
        let config = PipelineConfig {
            metadata_path: required(
                overrides.metadata_path.or(self.metadata_path),
                "metadata_path",
            )?,
            audio_dir: required(overrides.audio_dir.or(self.audio_dir), "audio_dir")?,
            output_path: required(overrides.output_path.or(self.output_path), "output_path")?,
            sensitivity_db: required(self.sensitivity_db, "sensitivity_db")?,
            segment_duration: required(self.segment_duration, "segment_duration")?,
            window_size,
            window_overlap: self.window_overlap.unwrap_or(0),
            nfft: self.nfft.unwrap_or(window_size),
            window_kind: self.window_kind.unwrap_or(WindowKind::HammingPeriodic),
            tol_enabled,
            tol_low_freq,
            tol_high_freq,
            worker_count: overrides
                .worker_count
                .or(self.worker_count)
                .unwrap_or_else(default_worker_count),
            format,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parses a `low:high` frequency range in Hz.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn parse_tol_range(s: &str) -> Result<(f64, f64)> {
    let (low, high) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("expected LOW:HIGH, got {s:?}"))?;
    let low: f64 = low
        .trim()
        .parse()
        .with_context(|| format!("bad low frequency {low:?}"))?;
    let high: f64 = high
        .trim()
        .parse()
        .with_context(|| format!("bad high frequency {high:?}"))?;
    if !(low < high) {
        bail!("low frequency {low} must be below high frequency {high}");
    }
    Ok((low, high))
}
