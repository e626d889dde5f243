//! Corpus-level orchestration.
//!
//! Files listed in the metadata CSV are decoded, calibrated, segmented and
//! analysed by a pool of worker threads, one file per task. Records flow back
//! through a reorder buffer so the output is always in (CSV row, segment)
//! order, whatever the worker count. Audio is read in segment-sized chunks.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use crate::audio::{Calibration, WavReader};
use crate::error::{Error, Result, TolConfigError};
use crate::metadata::{format_iso8601, parse_metadata, AudioFileDescriptor};
use crate::metrics::{check_tol_signal_length, spl, tol_bands, TolAccumulator, TolBandSet};
use crate::segmentation::{FrameSet, SegmentationConfig, WindowKind};
use crate::spectral::{
    one_sided_len, power_spectrum, psd_norm_factor, FrameTransform, WelchAccumulator, WelchVector,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOL_UNITS: &str = "dB re 1 uPa^2";
pub const PSD_UNITS: &str = "uPa^2/Hz";
pub const SPL_UNITS: &str = "dB re 1 uPa";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Ndjson,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndjson" => Ok(OutputFormat::Ndjson),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub metadata_path: PathBuf,
    pub audio_dir: PathBuf,
    pub output_path: PathBuf,
    /// Hydrophone sensitivity, dB re 1 V/μPa.
    pub sensitivity_db: f64,
    pub segment_duration: f64,
    pub window_size: usize,
    pub window_overlap: usize,
    pub nfft: usize,
    pub window_kind: WindowKind,
    pub tol_enabled: bool,
    pub tol_low_freq: f64,
    /// Defaults to each file's Nyquist frequency.
    pub tol_high_freq: Option<f64>,
    pub worker_count: usize,
    pub format: OutputFormat,
}

impl PipelineConfig {
    /// Config with the documented defaults for everything but the paths and
    /// analysis lengths.
    pub fn new(
        metadata_path: impl Into<PathBuf>,
        audio_dir: impl Into<PathBuf>,
        output_path: impl Into<PathBuf>,
        sensitivity_db: f64,
        segment_duration: f64,
        window_size: usize,
    ) -> Self {
        PipelineConfig {
            metadata_path: metadata_path.into(),
            audio_dir: audio_dir.into(),
            output_path: output_path.into(),
            sensitivity_db,
            segment_duration,
            window_size,
            window_overlap: 0,
            nfft: window_size,
            window_kind: WindowKind::HammingPeriodic,
            tol_enabled: false,
            tol_low_freq: 1.0,
            tol_high_freq: None,
            worker_count: default_worker_count(),
            format: OutputFormat::Ndjson,
        }
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            segment_duration: self.segment_duration,
            window_size: self.window_size,
            window_overlap: self.window_overlap,
            nfft: self.nfft,
            window_kind: self.window_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation().validate()?;
        Calibration::new(self.sensitivity_db)?;
        if self.worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        if self.tol_enabled {
            if !(self.tol_low_freq >= 1.0) {
                return Err(TolConfigError::LowFreqTooLow(self.tol_low_freq).into());
            }
            if let Some(high) = self.tol_high_freq {
                if !(self.tol_low_freq < high) {
                    return Err(TolConfigError::InvertedRange {
                        low_freq: self.tol_low_freq,
                        high_freq: high,
                    }
                    .into());
                }
            }
        }
        Ok(())
    }
}

pub fn default_worker_count() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Welch, SPL and optional TOL of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub welch: WelchVector,
    pub spl_db: f64,
    pub tol: Option<Vec<f64>>,
}

/// Per-file analysis state shared by every segment of that file.
#[derive(Debug, Clone)]
pub struct SegmentAnalyzer {
    config: SegmentationConfig,
    sample_rate: f64,
    window: Vec<f64>,
    transform: FrameTransform,
    norm: f64,
    bands: Option<Arc<TolBandSet>>,
}

/// Frame-by-frame accumulation of one segment's Welch and TOL sums.
pub struct SegmentAccumulator<'a> {
    analyzer: &'a SegmentAnalyzer,
    welch: WelchAccumulator,
    tol: Option<TolAccumulator<'a>>,
    frame: Vec<f64>,
    scratch: Vec<rustfft::num_complex::Complex64>,
}

impl SegmentAnalyzer {
    pub fn new(
        config: SegmentationConfig,
        sample_rate: f64,
        bands: Option<Arc<TolBandSet>>,
    ) -> Result<Self> {
        config.validate()?;
        let window = crate::segmentation::make_window(config.window_kind, config.window_size)?;
        let norm = psd_norm_factor(sample_rate, &window)?;
        if let Some(b) = &bands {
            if b.nfft != config.nfft {
                return Err(Error::Shape(format!(
                    "bands built for nfft {}, analysis uses {}",
                    b.nfft, config.nfft
                )));
            }
        }
        Ok(SegmentAnalyzer {
            transform: FrameTransform::new(config.nfft)?,
            config,
            sample_rate,
            window,
            norm,
            bands,
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn accumulator(&self) -> SegmentAccumulator<'_> {
        SegmentAccumulator {
            analyzer: self,
            welch: WelchAccumulator::new(one_sided_len(self.config.nfft)),
            tol: self.bands.as_deref().map(TolAccumulator::new),
            frame: Vec::with_capacity(self.config.window_size),
            scratch: Vec::with_capacity(self.config.nfft),
        }
    }

    /// Frames, windows and analyses a whole segment held in memory.
    pub fn analyze_segment(&self, segment: &[f64], segment_index: usize) -> Result<SpectralResult> {
        let frames = FrameSet::new(segment, segment_index, self.config)?;
        let mut acc = self.accumulator();
        for frame in &frames.frames {
            acc.push_windowed(frame)?;
        }
        acc.finish()
    }
}

impl SegmentAccumulator<'_> {
    /// Windows a raw frame and accumulates its PSD.
    pub fn push_raw(&mut self, frame: &[f64]) -> Result<()> {
        let window = &self.analyzer.window;
        if frame.len() != window.len() {
            return Err(Error::Shape(format!(
                "frame has {} samples, window has {}",
                frame.len(),
                window.len()
            )));
        }
        let mut windowed = std::mem::take(&mut self.frame);
        windowed.clear();
        windowed.extend(frame.iter().zip(window).map(|(x, w)| x * w));
        let r = self.push_windowed(&windowed);
        self.frame = windowed;
        r
    }

    pub fn push_windowed(&mut self, frame: &[f64]) -> Result<()> {
        let spec = self
            .analyzer
            .transform
            .one_sided(frame, &mut self.scratch)?;
        let mut power = power_spectrum(&spec);
        for p in &mut power.values {
            *p *= self.analyzer.norm;
        }
        self.welch.push(&power.values)?;
        if let Some(tol) = &mut self.tol {
            tol.push(&power.values)?;
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.welch.count()
    }

    pub fn finish(self) -> Result<SpectralResult> {
        let welch = self.welch.finish()?;
        let spl_db = spl(&welch)?;
        let tol = self.tol.map(TolAccumulator::finish).transpose()?;
        Ok(SpectralResult { welch, spl_db, tol })
    }
}

/// One output row: the metrics of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub file: String,
    pub segment_index: usize,
    pub timestamp: DateTime<Utc>,
    pub n_frames: usize,
    pub spl_db: f64,
    pub welch: Vec<f64>,
    pub tol: Option<Vec<f64>>,
    /// Flags beyond the non-finite markers derived at serialization.
    pub quality: Vec<String>,
}

/// Leading line for each file: frequency axis and analysis parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileHeader {
    pub file: String,
    pub start_date: String,
    pub sample_rate: f64,
    pub n_samples: u64,
    pub n_channels: u16,
    pub bit_depth: u16,
    pub nfft: usize,
    pub frequency_step: f64,
    pub window_size: usize,
    pub window_overlap: usize,
    pub window_kind: WindowKind,
    pub segment_duration: f64,
    pub segment_size: usize,
    pub sensitivity_db: f64,
    pub psd_units: &'static str,
    pub spl_units: &'static str,
    pub tol_units: &'static str,
    pub tol_band_centers: Option<Vec<f64>>,
    pub tol_nominal_centers: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    schema: u32,
    kind: &'static str,
    #[serde(flatten)]
    header: &'a FileHeader,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    schema: u32,
    kind: &'static str,
    file: &'a str,
    segment_index: usize,
    timestamp: String,
    n_frames: usize,
    spl_db: Option<f64>,
    welch: Vec<Option<f64>>,
    tol: Option<Vec<Option<f64>>>,
    quality: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl MetricRecord {
    /// Quality flags including non-finite markers for nulled values.
    pub fn quality_flags(&self) -> Vec<String> {
        let mut flags = self.quality.clone();
        if !self.spl_db.is_finite() {
            flags.push("spl_nonfinite".into());
        }
        if self.welch.iter().any(|v| !v.is_finite()) {
            flags.push("welch_nonfinite".into());
        }
        if self
            .tol
            .as_ref()
            .is_some_and(|t| t.iter().any(|v| !v.is_finite()))
        {
            flags.push("tol_nonfinite".into());
        }
        flags
    }

    fn line(&self) -> RecordLine<'_> {
        RecordLine {
            schema: SCHEMA_VERSION,
            kind: "segment",
            file: &self.file,
            segment_index: self.segment_index,
            timestamp: format_iso8601(&self.timestamp),
            n_frames: self.n_frames,
            spl_db: finite(self.spl_db),
            welch: self.welch.iter().copied().map(finite).collect(),
            tol: self
                .tol
                .as_ref()
                .map(|t| t.iter().copied().map(finite).collect()),
            quality: self.quality_flags(),
        }
    }
}

/// Writes `record` as one NDJSON line. Non-finite numbers become `null`.
pub fn emit_record<W: Write>(record: &MetricRecord, sink: &mut W) -> Result<()> {
    let io = |e| Error::io("<output>", e);
    serde_json::to_writer(&mut *sink, &record.line()).map_err(|e| io(e.into()))?;
    sink.write_all(b"\n").map_err(io)
}

pub fn emit_header<W: Write>(header: &FileHeader, sink: &mut W) -> Result<()> {
    let io = |e| Error::io("<output>", e);
    let line = HeaderLine {
        schema: SCHEMA_VERSION,
        kind: "file",
        header,
    };
    serde_json::to_writer(&mut *sink, &line).map_err(|e| io(e.into()))?;
    sink.write_all(b"\n").map_err(io)
}

/// Serializes headers and records in the configured format.
///
/// CSV rows are `file,segment_index,timestamp,sample_rate,nfft,n_frames,spl_db,
/// quality,n_welch,n_tol` followed by the `n_welch` Welch bins and the `n_tol`
/// band levels. Empty cells stand for non-finite values.
pub enum RecordWriter<W: Write> {
    Ndjson(W),
    Csv {
        writer: Box<csv::Writer<W>>,
        axis: Option<(f64, usize)>,
    },
}

pub const CSV_COLUMNS: [&str; 11] = [
    "file",
    "segment_index",
    "timestamp",
    "sample_rate",
    "nfft",
    "n_frames",
    "spl_db",
    "quality",
    "n_welch",
    "n_tol",
    "values",
];

impl<W: Write> RecordWriter<W> {
    pub fn new(sink: W, format: OutputFormat) -> Result<Self> {
        Ok(match format {
            OutputFormat::Ndjson => RecordWriter::Ndjson(sink),
            OutputFormat::Csv => {
                let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(sink);
                writer.write_record(CSV_COLUMNS).map_err(csv_error)?;
                RecordWriter::Csv {
                    writer: Box::new(writer),
                    axis: None,
                }
            }
        })
    }

    pub fn header(&mut self, header: &FileHeader) -> Result<()> {
        match self {
            RecordWriter::Ndjson(sink) => emit_header(header, sink),
            RecordWriter::Csv { axis, .. } => {
                *axis = Some((header.sample_rate, header.nfft));
                Ok(())
            }
        }
    }

    pub fn record(&mut self, record: &MetricRecord) -> Result<()> {
        match self {
            RecordWriter::Ndjson(sink) => emit_record(record, sink),
            RecordWriter::Csv { writer, axis } => {
                let (sample_rate, nfft) = axis.unwrap_or((f64::NAN, 0));
                let num = |v: f64| {
                    if v.is_finite() {
                        v.to_string()
                    } else {
                        String::new()
                    }
                };
                let tol = record.tol.as_deref().unwrap_or(&[]);
                let mut row = vec![
                    record.file.clone(),
                    record.segment_index.to_string(),
                    format_iso8601(&record.timestamp),
                    num(sample_rate),
                    nfft.to_string(),
                    record.n_frames.to_string(),
                    num(record.spl_db),
                    record.quality_flags().join(";"),
                    record.welch.len().to_string(),
                    tol.len().to_string(),
                ];
                row.extend(record.welch.iter().map(|v| num(*v)));
                row.extend(tol.iter().map(|v| num(*v)));
                writer.write_record(&row).map_err(csv_error)
            }
        }
    }

    pub fn flush(&mut self) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        match self {
            RecordWriter::Ndjson(sink) => sink.flush().map_err(io),
            RecordWriter::Csv { writer, .. } => writer.flush().map_err(io),
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("<output>", std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub files_in_csv: usize,
    pub files_processed: usize,
    pub files_skipped: Vec<SkippedFile>,
    pub records_emitted: usize,
    /// Segments with no complete analysis frame.
    pub segments_skipped: usize,
    /// Trailing samples discarded by segmentation.
    pub samples_dropped: u64,
}

impl RunSummary {
    pub fn is_clean(&self) -> bool {
        self.files_skipped.is_empty() && self.records_emitted > 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct FileStats {
    records: usize,
    segments_skipped: usize,
    samples_dropped: u64,
}

enum FileEvent {
    Header(Box<FileHeader>),
    Record(MetricRecord),
    Done(Result<FileStats, String>),
}

enum FileFailure {
    Skip(Error),
    /// The writer has gone away.
    Aborted,
}

impl From<Error> for FileFailure {
    fn from(e: Error) -> Self {
        FileFailure::Skip(e)
    }
}

type BandKey = (u64, usize, u64, Option<u64>);

/// Shared, read-only state for every worker.
struct RunContext<'a> {
    config: &'a PipelineConfig,
    calibration: Calibration,
    bands: Mutex<HashMap<BandKey, Result<Arc<TolBandSet>, TolConfigError>>>,
}

impl RunContext<'_> {
    fn bands_for(&self, sample_rate: f64) -> Result<Option<Arc<TolBandSet>>, TolConfigError> {
        if !self.config.tol_enabled {
            return Ok(None);
        }
        let c = self.config;
        let high = c.tol_high_freq.unwrap_or(sample_rate / 2.0);
        let key = (
            sample_rate.to_bits(),
            c.nfft,
            c.tol_low_freq.to_bits(),
            c.tol_high_freq.map(f64::to_bits),
        );
        let mut cache = self.bands.lock().unwrap_or_else(|p| p.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| tol_bands(sample_rate, c.nfft, c.tol_low_freq, high).map(Arc::new))
            .clone()
            .map(Some)
    }

    fn process_file(
        &self,
        descriptor: &AudioFileDescriptor,
        emit: &mut dyn FnMut(FileEvent) -> bool,
    ) -> Result<FileStats, FileFailure> {
        let config = self.config;
        let path = config.audio_dir.join(&descriptor.name);
        let mut reader = WavReader::open(&path)?;
        let header = *reader.header();
        if header.n_channels > 1 {
            log::warn!(
                "{}: {} channels, keeping channel 1 only",
                descriptor.name,
                header.n_channels
            );
        }
        let fs = header.sample_rate;
        let seg_config = config.segmentation();
        let segment_size = seg_config.segment_size(fs)?;
        let bands = self.bands_for(fs).map_err(Error::from)?;
        let analyzer = SegmentAnalyzer::new(seg_config, fs, bands.clone())?;

        let file_header = FileHeader {
            file: descriptor.name.clone(),
            start_date: format_iso8601(&descriptor.start_instant),
            sample_rate: fs,
            n_samples: header.n_samples,
            n_channels: header.n_channels,
            bit_depth: header.bit_depth,
            nfft: config.nfft,
            frequency_step: fs / config.nfft as f64,
            window_size: config.window_size,
            window_overlap: config.window_overlap,
            window_kind: config.window_kind,
            segment_duration: config.segment_duration,
            segment_size,
            sensitivity_db: config.sensitivity_db,
            psd_units: PSD_UNITS,
            spl_units: SPL_UNITS,
            tol_units: TOL_UNITS,
            tol_band_centers: bands.as_ref().map(|b| b.centers()),
            tol_nominal_centers: bands.as_ref().map(|b| b.nominal_centers()),
        };
        if !emit(FileEvent::Header(Box::new(file_header))) {
            return Err(FileFailure::Aborted);
        }

        let mut stats = FileStats::default();
        let mut send = |segment_index: usize, len: usize, result: SpectralResult, frames: usize| {
            let mut quality = Vec::new();
            let mut tol = result.tol;
            if tol.is_some() {
                if let Err(e) = check_tol_signal_length(len, fs) {
                    log::warn!("{} segment {segment_index}: {e}", descriptor.name);
                    quality.push("tol_signal_too_short".to_owned());
                    tol = None;
                }
            }
            let offset = segment_index as f64 * config.segment_duration;
            let record = MetricRecord {
                file: descriptor.name.clone(),
                segment_index,
                timestamp: descriptor.start_instant
                    + Duration::nanoseconds((offset * 1e9).round() as i64),
                n_frames: frames,
                spl_db: result.spl_db,
                welch: result.welch.values,
                tol,
                quality,
            };
            emit(FileEvent::Record(record))
        };

        if segment_size > config.window_size {
            let n_segments = header.n_samples / segment_size as u64;
            stats.samples_dropped = header.n_samples - n_segments * segment_size as u64;
            let mut buf = Vec::with_capacity(segment_size);
            for s in 0..n_segments as usize {
                buf.clear();
                if reader.read_frames(segment_size, &mut buf)? != segment_size {
                    return Err(Error::CorruptFile {
                        reason: "data chunk ended early".into(),
                        expected: segment_size as u64,
                        actual: buf.len() as u64,
                    }
                    .into());
                }
                self.calibration.apply(&mut buf);
                let result = analyzer.analyze_segment(&buf, s)?;
                let frames = result.welch.n_frames_averaged;
                if !send(s, segment_size, result, frames) {
                    return Err(FileFailure::Aborted);
                }
                stats.records += 1;
            }
        } else {
            // whole file is one segment; stream it frame by frame
            let n = config.window_size;
            let hop = seg_config.hop();
            let mut acc = analyzer.accumulator();
            let mut pending: Vec<f64> = Vec::with_capacity(n + hop);
            let mut consumed = 0u64;
            loop {
                while pending.len() >= n {
                    acc.push_raw(&pending[..n])?;
                    pending.drain(..hop);
                    consumed += hop as u64;
                }
                let start = pending.len();
                if reader.read_frames(hop.max(n - start), &mut pending)? == 0 {
                    break;
                }
                self.calibration.apply(&mut pending[start..]);
            }
            let frames = acc.frames();
            if frames == 0 {
                log::warn!(
                    "{}: {} samples is shorter than one {n}-sample window",
                    descriptor.name,
                    header.n_samples
                );
                stats.segments_skipped = 1;
                stats.samples_dropped = header.n_samples;
            } else {
                let covered = consumed + (n - hop) as u64;
                stats.samples_dropped = header.n_samples - covered;
                let result = acc.finish()?;
                if !send(0, header.n_samples as usize, result, frames) {
                    return Err(FileFailure::Aborted);
                }
                stats.records = 1;
            }
        }
        Ok(stats)
    }
}

/// Runs the pipeline described by `config`, writing to `config.output_path`.
pub fn run(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let text = std::fs::read_to_string(&config.metadata_path)
        .map_err(|e| Error::io(&config.metadata_path, e))?;
    let descriptors = parse_metadata(&text)?;
    let file = File::create(&config.output_path).map_err(|e| Error::io(&config.output_path, e))?;
    let sink = BufWriter::new(file);
    run_with(config, &descriptors, sink).map_err(|e| match e {
        Error::Io { path, source } if path == Path::new("<output>") => {
            Error::io(&config.output_path, source)
        }
        other => other,
    })
}

/// Processes `descriptors` and writes records to `sink`. Per-file failures are
/// skipped and reported in the summary; sink failures abort the run.
pub fn run_with<W: Write>(
    config: &PipelineConfig,
    descriptors: &[AudioFileDescriptor],
    sink: W,
) -> Result<RunSummary> {
    config.validate()?;
    if config.tol_enabled && config.segment_duration < 30.0 && config.tol_low_freq < 25.0 {
        log::warn!(
            "third-octave levels below 25 Hz are unreliable with {} s segments (30 s or more recommended)",
            config.segment_duration
        );
    }
    let ctx = RunContext {
        config,
        calibration: Calibration::new(config.sensitivity_db)?,
        bands: Mutex::new(HashMap::new()),
    };
    let mut writer = RecordWriter::new(sink, config.format)?;
    let mut summary = RunSummary {
        files_in_csv: descriptors.len(),
        ..RunSummary::default()
    };
    let workers = config.worker_count.min(descriptors.len()).max(1);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);

    thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::sync_channel::<(usize, FileEvent)>(workers * 16);
        for _ in 0..workers {
            let tx = tx.clone();
            let (ctx, next, stop) = (&ctx, &next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(descriptor) = descriptors.get(idx) else {
                    break;
                };
                let mut emit = |ev| tx.send((idx, ev)).is_ok();
                let outcome = match ctx.process_file(descriptor, &mut emit) {
                    Ok(stats) => Ok(stats),
                    Err(FileFailure::Skip(e)) => Err(e.to_string()),
                    Err(FileFailure::Aborted) => break,
                };
                if !emit(FileEvent::Done(outcome)) {
                    break;
                }
            });
        }
        drop(tx);

        let result = reorder_and_write(rx, descriptors, &mut writer, &mut summary);
        if result.is_err() {
            stop.store(true, Ordering::Relaxed);
        }
        result
    })?;
    writer.flush()?;
    Ok(summary)
}

fn reorder_and_write<W: Write>(
    rx: mpsc::Receiver<(usize, FileEvent)>,
    descriptors: &[AudioFileDescriptor],
    writer: &mut RecordWriter<W>,
    summary: &mut RunSummary,
) -> Result<()> {
    let mut current = 0usize;
    let mut pending: BTreeMap<usize, Vec<FileEvent>> = BTreeMap::new();

    // returns true once the file's Done event has been handled
    let mut handle = |idx: usize, ev: FileEvent, summary: &mut RunSummary| -> Result<bool> {
        match ev {
            FileEvent::Header(h) => writer.header(&h).map(|_| false),
            FileEvent::Record(r) => writer.record(&r).map(|_| false),
            FileEvent::Done(Ok(stats)) => {
                summary.files_processed += 1;
                summary.records_emitted += stats.records;
                summary.segments_skipped += stats.segments_skipped;
                summary.samples_dropped += stats.samples_dropped;
                Ok(true)
            }
            FileEvent::Done(Err(reason)) => {
                let name = descriptors[idx].name.clone();
                log::error!("skipping {name}: {reason}");
                summary.files_skipped.push(SkippedFile { name, reason });
                Ok(true)
            }
        }
    };

    for (idx, ev) in rx {
        if idx != current {
            pending.entry(idx).or_default().push(ev);
            continue;
        }
        if !handle(idx, ev, summary)? {
            continue;
        }
        current += 1;
        while let Some(events) = pending.remove(&current) {
            let mut done = false;
            for ev in events {
                done = handle(current, ev, summary)?;
            }
            if !done {
                break;
            }
            current += 1;
        }
    }
    Ok(())
}
