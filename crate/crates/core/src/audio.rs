//! PCM WAV decoding and scalar hydrophone calibration.
//!
//! Integer PCM of width `B` bits is mapped to `sample / 2^(B-1)`, giving values
//! in `[-1, 1)`. 8-bit WAV is unsigned and is re-centred on 128 first. IEEE
//! float32 data is passed through unchanged. Only the first channel is kept.
//!
//! Calibration divides by `10^(S/20)` where `S` is the hydrophone sensitivity in
//! dB re 1 V/μPa. Because the decoder already normalizes to full scale, `S`
//! here is relative to digital full scale, which differs from a sensitivity
//! quoted against raw integer counts by `20·log10(2^(B-1))` dB.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Int,
    Float,
}

/// Parsed `fmt ` and `data` chunk information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavHeader {
    pub sample_format: SampleFormat,
    pub sample_rate: f64,
    pub bit_depth: u16,
    pub n_channels: u16,
    /// Declared frame count (samples per channel).
    pub n_samples: u64,
}

impl WavHeader {
    fn bytes_per_sample(&self) -> usize {
        usize::from(self.bit_depth / 8)
    }

    fn block_align(&self) -> usize {
        self.bytes_per_sample() * usize::from(self.n_channels)
    }
}

/// Decoded first channel of a WAV file, normalized to full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAudio {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub channel_count: u16,
}

/// Pressure waveform after sensitivity correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedSignal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

/// Streaming reader over the data chunk of a RIFF/WAVE file.
pub struct WavReader<R> {
    inner: R,
    header: WavHeader,
    frames_left: u64,
    buf: Vec<u8>,
}

impl WavReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        Self::new(BufReader::new(file), len).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

impl<R: Read + Seek> WavReader<R> {
    /// Parses the RIFF header. `stream_len` is the total byte length of the
    /// stream and is used to detect truncated data chunks up front.
    pub fn new(mut inner: R, stream_len: u64) -> Result<Self> {
        let io = |e| Error::io("<wav>", e);
        let mut riff = [0u8; 12];
        read_header_bytes(&mut inner, &mut riff, 0, stream_len)?;
        if &riff[0..4] != b"RIFF" || &riff[8..12] != b"WAVE" {
            return Err(Error::UnsupportedFormat("not a RIFF/WAVE file".into()));
        }

        let mut pos = 12u64;
        let mut fmt: Option<(u16, u16, u32, u16, u16)> = None;
        loop {
            let mut chunk = [0u8; 8];
            read_header_bytes(&mut inner, &mut chunk, pos, stream_len)?;
            pos += 8;
            let id = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let size = u64::from(u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]));
            match &id {
                b"fmt " => {
                    if size < 16 {
                        return Err(Error::CorruptFile {
                            reason: "fmt chunk too short".into(),
                            expected: 16,
                            actual: size,
                        });
                    }
                    let mut body = [0u8; 16];
                    read_header_bytes(&mut inner, &mut body, pos, stream_len)?;
                    let le16 = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
                    let sample_rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                    fmt = Some((le16(0), le16(2), sample_rate, le16(12), le16(14)));
                    pos += size + (size & 1);
                    inner.seek(SeekFrom::Start(pos)).map_err(io)?;
                }
                b"data" => {
                    let (code, channels, sample_rate, block_align, bits) =
                        fmt.ok_or_else(|| {
                            Error::UnsupportedFormat("data chunk precedes fmt chunk".into())
                        })?;
                    let sample_format = match (code, bits) {
                        (FORMAT_PCM, 8 | 16 | 24 | 32) => SampleFormat::Int,
                        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float,
                        (FORMAT_PCM | FORMAT_IEEE_FLOAT, b) => {
                            return Err(Error::UnsupportedFormat(format!(
                                "format code {code} with {b} bits per sample"
                            )))
                        }
                        (c, _) => {
                            return Err(Error::UnsupportedFormat(format!(
                                "format code {c:#06x} (only PCM and IEEE float are accepted)"
                            )))
                        }
                    };
                    if channels == 0 || sample_rate == 0 {
                        return Err(Error::UnsupportedFormat(format!(
                            "{channels} channels at {sample_rate} Hz"
                        )));
                    }
                    let mut header = WavHeader {
                        sample_format,
                        sample_rate: f64::from(sample_rate),
                        bit_depth: bits,
                        n_channels: channels,
                        n_samples: 0,
                    };
                    if usize::from(block_align) != header.block_align() {
                        return Err(Error::CorruptFile {
                            reason: "block alignment disagrees with channel layout".into(),
                            expected: header.block_align() as u64,
                            actual: u64::from(block_align),
                        });
                    }
                    let available = stream_len.saturating_sub(pos);
                    if size > available {
                        return Err(Error::CorruptFile {
                            reason: "truncated data chunk".into(),
                            expected: size,
                            actual: available,
                        });
                    }
                    header.n_samples = size / header.block_align() as u64;
                    return Ok(WavReader {
                        inner,
                        header,
                        frames_left: header.n_samples,
                        buf: Vec::new(),
                    });
                }
                _ => {
                    pos += size + (size & 1);
                    inner.seek(SeekFrom::Start(pos)).map_err(io)?;
                }
            }
        }
    }

    pub fn header(&self) -> &WavHeader {
        &self.header
    }

    pub fn frames_remaining(&self) -> u64 {
        self.frames_left
    }

    /// Appends up to `max_frames` decoded first-channel samples to `out`.
    /// Returns the number appended; zero at end of data.
    pub fn read_frames(&mut self, max_frames: usize, out: &mut Vec<f64>) -> Result<usize> {
        let n = (max_frames as u64).min(self.frames_left) as usize;
        if n == 0 {
            return Ok(0);
        }
        let align = self.header.block_align();
        self.buf.resize(n * align, 0);
        self.inner.read_exact(&mut self.buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::CorruptFile {
                    reason: "data chunk ended early".into(),
                    expected: self.frames_left * align as u64,
                    actual: 0,
                }
            } else {
                Error::io("<wav>", e)
            }
        })?;
        let width = self.header.bytes_per_sample();
        let decode: fn(&[u8]) -> f64 = match (self.header.sample_format, width) {
            (SampleFormat::Float, _) => decode_f32,
            (SampleFormat::Int, 1) => decode_u8,
            (SampleFormat::Int, 2) => decode_i16,
            (SampleFormat::Int, 3) => decode_i24,
            (SampleFormat::Int, _) => decode_i32,
        };
        out.extend(
            self.buf
                .chunks_exact(align)
                .map(|frame| decode(&frame[..width])),
        );
        self.frames_left -= n as u64;
        Ok(n)
    }
}

fn read_header_bytes<R: Read>(inner: &mut R, buf: &mut [u8], pos: u64, len: u64) -> Result<()> {
    inner.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptFile {
                reason: "header ends before the data chunk".into(),
                expected: pos + buf.len() as u64,
                actual: len,
            }
        } else {
            Error::io("<wav>", e)
        }
    })
}

fn decode_u8(b: &[u8]) -> f64 {
    (f64::from(b[0]) - 128.0) / 128.0
}

fn decode_i16(b: &[u8]) -> f64 {
    f64::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0
}

fn decode_i24(b: &[u8]) -> f64 {
    // sign-extend through the top byte of an i32
    f64::from(i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) / 8_388_608.0
}

fn decode_i32(b: &[u8]) -> f64 {
    f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0
}

fn decode_f32(b: &[u8]) -> f64 {
    f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Decodes a whole WAV file. Multichannel input keeps channel 1 only.
pub fn read_wav(path: impl AsRef<Path>) -> Result<RawAudio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let header = *reader.header();
    if header.n_channels > 1 {
        log::warn!(
            "{}: {} channels, keeping channel 1 only",
            path.display(),
            header.n_channels
        );
    }
    let mut samples = Vec::with_capacity(header.n_samples as usize);
    while reader.read_frames(1 << 16, &mut samples)? > 0 {}
    Ok(RawAudio {
        samples,
        sample_rate: header.sample_rate,
        channel_count: header.n_channels,
    })
}

/// Linear divisor `10^(S/20)` for a sensitivity `S` in dB re 1 V/μPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    divisor: f64,
}

impl Calibration {
    pub fn new(sensitivity_db: f64) -> Result<Self> {
        if !sensitivity_db.is_finite() {
            return Err(Error::Config(format!(
                "hydrophone sensitivity must be finite, got {sensitivity_db}"
            )));
        }
        Ok(Calibration {
            divisor: 10f64.powf(sensitivity_db / 20.0),
        })
    }

    pub fn divisor(&self) -> f64 {
        self.divisor
    }

    pub fn apply(&self, samples: &mut [f64]) {
        for s in samples {
            *s /= self.divisor;
        }
    }
}

pub fn calibrate(raw: RawAudio, sensitivity_db: f64) -> Result<CalibratedSignal> {
    let calibration = Calibration::new(sensitivity_db)?;
    let RawAudio {
        mut samples,
        sample_rate,
        ..
    } = raw;
    calibration.apply(&mut samples);
    Ok(CalibratedSignal {
        samples,
        sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    /// Minimal RIFF writer; independent of the `WavReader` header walk.
    fn wav_bytes(code: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&code.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        v.extend_from_slice(&(rate * u32::from(block)).to_le_bytes());
        v.extend_from_slice(&block.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    fn decode_all(bytes: Vec<u8>) -> Result<(WavHeader, Vec<f64>)> {
        let len = bytes.len() as u64;
        let mut r = WavReader::new(Cursor::new(bytes), len)?;
        let mut out = Vec::new();
        while r.read_frames(3, &mut out)? > 0 {}
        Ok((*r.header(), out))
    }

    #[test]
    fn pcm16_full_scale_mapping() {
        let data: Vec<u8> = [-32768i16, 16384, 0, 32767]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let (h, s) = decode_all(wav_bytes(1, 1, 1500, 16, &data)).unwrap();
        assert_eq!(h.n_samples, 4);
        assert_eq!(h.sample_rate, 1500.0);
        assert_eq!(s, vec![-1.0, 0.5, 0.0, 32767.0 / 32768.0]);
    }

    #[test]
    fn pcm8_is_unsigned() {
        let (_, s) = decode_all(wav_bytes(1, 1, 8000, 8, &[128, 0, 255])).unwrap();
        assert_eq!(s, vec![0.0, -1.0, 127.0 / 128.0]);
    }

    #[test]
    fn pcm24_and_32_sign_extension() {
        let data = [0x00, 0x00, 0x80, 0xff, 0xff, 0xff];
        let (_, s) = decode_all(wav_bytes(1, 1, 8000, 24, &data)).unwrap();
        assert_eq!(s, vec![-1.0, -1.0 / 8_388_608.0]);

        let data: Vec<u8> = [i32::MIN, 1 << 30]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let (_, s) = decode_all(wav_bytes(1, 1, 8000, 32, &data)).unwrap();
        assert_eq!(s, vec![-1.0, 0.5]);
    }

    #[test]
    fn float32_passthrough() {
        let data: Vec<u8> = [0.25f32, -1.5]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let (h, s) = decode_all(wav_bytes(3, 1, 48000, 32, &data)).unwrap();
        assert_eq!(h.sample_format, SampleFormat::Float);
        assert_eq!(s, vec![0.25, -1.5]);
    }

    #[test]
    fn keeps_first_channel() {
        let data: Vec<u8> = [100i16, -5, 200, -6, 300, -7]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let (h, s) = decode_all(wav_bytes(1, 2, 1500, 16, &data)).unwrap();
        assert_eq!(h.n_channels, 2);
        assert_eq!(h.n_samples, 3);
        assert_eq!(s, vec![100.0 / 32768.0, 200.0 / 32768.0, 300.0 / 32768.0]);
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = wav_bytes(1, 1, 1500, 16, &[0, 64]);
        // splice a LIST chunk with odd length (padded) between fmt and data
        let list = [b'L', b'I', b'S', b'T', 3, 0, 0, 0, b'a', b'b', b'c', 0];
        bytes.splice(36..36, list);
        let (_, s) = decode_all(bytes).unwrap();
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn rejects_compressed_formats() {
        for code in [2u16, 6, 7, 0xfffe] {
            let err = decode_all(wav_bytes(code, 1, 8000, 16, &[0, 0])).unwrap_err();
            assert!(
                matches!(err, Error::UnsupportedFormat(_)),
                "code {code}: {err}"
            );
        }
        let err = decode_all(wav_bytes(3, 1, 8000, 64, &[0; 8])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
        let err = decode_all(b"RIFX\0\0\0\0WAVE".to_vec()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_data_reports_byte_counts() {
        let mut bytes = wav_bytes(1, 1, 1500, 16, &[0; 100]);
        bytes.truncate(bytes.len() - 30);
        match decode_all(bytes).unwrap_err() {
            Error::CorruptFile {
                expected, actual, ..
            } => {
                assert_eq!(expected, 100);
                assert_eq!(actual, 70);
            }
            e => panic!("unexpected error {e}"),
        }
        let err = decode_all(wav_bytes(1, 1, 1500, 16, &[])[..20].to_vec()).unwrap_err();
        assert!(matches!(err, Error::CorruptFile { .. }));
    }

    #[test]
    fn calibration_examples() {
        let raw = |samples: Vec<f64>| RawAudio {
            samples,
            sample_rate: 1500.0,
            channel_count: 1,
        };
        assert_eq!(
            calibrate(raw(vec![0.5, -0.25]), 0.0).unwrap().samples,
            vec![0.5, -0.25]
        );
        let s = calibrate(raw(vec![0.5]), -6.0206).unwrap().samples;
        assert!((s[0] - 1.0).abs() < 1e-5);
        let s = calibrate(raw(vec![1.0]), 20.0).unwrap().samples;
        assert!((s[0] - 0.1).abs() < 1e-15);
        assert!(matches!(
            calibrate(raw(vec![1.0]), f64::NAN),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Calibration::new(f64::INFINITY),
            Err(Error::Config(_))
        ));
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    proptest! {
        #[test]
        fn calibration_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 1..64),
            a in -100.0f64..100.0,
            s in -200.0f64..20.0,
        ) {
            let c = Calibration::new(s).unwrap();
            let mut scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
            c.apply(&mut scaled);
            let mut plain = x.clone();
            c.apply(&mut plain);
            for (l, r) in scaled.iter().zip(&plain) {
                prop_assert!(rel_close(*l, a * r, 1e-15));
            }
        }

        #[test]
        fn calibration_round_trips(
            x in prop::collection::vec(-1.0f64..1.0, 1..64),
            s in -200.0f64..200.0,
        ) {
            let mut y = x.clone();
            Calibration::new(s).unwrap().apply(&mut y);
            Calibration::new(-s).unwrap().apply(&mut y);
            for (a, b) in x.iter().zip(&y) {
                prop_assert!(rel_close(*a, *b, 1e-12));
            }
        }

        #[test]
        fn calibration_keeps_extremum_positions(
            x in prop::collection::vec(-1.0f64..1.0, 2..64),
            s in -200.0f64..20.0,
        ) {
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |m, (i, a)| if *a > v[m] { i } else { m });
            let argmin = |v: &[f64]| v.iter().enumerate().fold(0, |m, (i, a)| if *a < v[m] { i } else { m });
            let mut y = x.clone();
            Calibration::new(s).unwrap().apply(&mut y);
            prop_assert_eq!(argmax(&x), argmax(&y));
            prop_assert_eq!(argmin(&x), argmin(&y));
        }
    }
}
