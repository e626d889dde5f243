//! Third-octave levels and broadband sound pressure level.
//!
//! Band `i` is centred on `10^(i/10)` Hz with edges at `centre · 10^(∓1/20)`.
//! Levels are `10·log10` of summed density bins with `p_ref = 1 μPa`, i.e. dB
//! re 1 μPa². A band whose power is zero yields `-inf`.

use std::ops::Range;

use crate::error::{Error, Result, TolConfigError};
use crate::spectral::{one_sided_len, WelchVector};

/// Number of candidate base-ten bands, `i = 0..59`.
pub const CANDIDATE_BANDS: usize = 60;

/// Edge scaling `10^0.05` between a band centre and its bounds.
pub fn band_edge_factor() -> f64 {
    10f64.powf(0.05)
}

const NOMINAL_MANTISSAS: [f64; 10] = [1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0];

/// Conventional rounded label for band `i` (e.g. 63 Hz for `10^1.8`).
pub fn nominal_center(i: usize) -> f64 {
    NOMINAL_MANTISSAS[i % 10] * 10f64.powi((i / 10) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TolBand {
    /// Band number `i`.
    pub index: usize,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    /// Half-open PSD bin range.
    pub bins: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TolBandSet {
    pub bands: Vec<TolBand>,
    pub sample_rate: f64,
    pub nfft: usize,
}

impl TolBandSet {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.center).collect()
    }

    pub fn nominal_centers(&self) -> Vec<f64> {
        self.bands.iter().map(|b| nominal_center(b.index)).collect()
    }
}

/// Enumerates the base-ten third-octave bands usable at `sample_rate` with
/// 1-second transforms (`nfft == round(sample_rate)`).
pub fn tol_bands(
    sample_rate: f64,
    nfft: usize,
    low_freq: f64,
    high_freq: f64,
) -> Result<TolBandSet, TolConfigError> {
    if nfft as f64 != sample_rate.round() {
        return Err(TolConfigError::WindowNotSampleRate { nfft, sample_rate });
    }
    if !(low_freq >= 1.0) {
        return Err(TolConfigError::LowFreqTooLow(low_freq));
    }
    if !(high_freq <= sample_rate / 2.0) {
        return Err(TolConfigError::HighFreqAboveNyquist {
            high_freq,
            sample_rate,
        });
    }
    if !(low_freq < high_freq) {
        return Err(TolConfigError::InvertedRange {
            low_freq,
            high_freq,
        });
    }

    let nyquist = sample_rate / 2.0;
    let edge = band_edge_factor();
    let to_bin = |f: f64| (f * nfft as f64 / sample_rate).floor() as usize;
    let bands = (0..CANDIDATE_BANDS)
        .filter_map(|i| {
            let center = 10f64.powf(i as f64 / 10.0);
            let lower = center / edge;
            let upper = center * edge;
            let retained = upper < nyquist && low_freq <= upper && lower < high_freq;
            retained.then(|| TolBand {
                index: i,
                center,
                lower,
                upper,
                bins: to_bin(lower)..to_bin(upper),
            })
        })
        .collect();
    Ok(TolBandSet {
        bands,
        sample_rate,
        nfft,
    })
}

/// A segment must span at least one second for its low bands to be resolved.
pub fn check_tol_signal_length(length: usize, sample_rate: f64) -> Result<(), TolConfigError> {
    if (length as f64) < sample_rate {
        return Err(TolConfigError::SignalTooShort {
            length,
            sample_rate,
        });
    }
    Ok(())
}

/// Per-band running sum of frame band powers.
#[derive(Debug, Clone)]
pub struct TolAccumulator<'a> {
    bands: &'a TolBandSet,
    sums: Vec<f64>,
    frames: usize,
}

impl<'a> TolAccumulator<'a> {
    pub fn new(bands: &'a TolBandSet) -> Self {
        TolAccumulator {
            bands,
            sums: vec![0.0; bands.len()],
            frames: 0,
        }
    }

    pub fn push(&mut self, psd_frame: &[f64]) -> Result<()> {
        let k = one_sided_len(self.bands.nfft);
        if psd_frame.len() != k {
            return Err(Error::Shape(format!(
                "PSD frame has {} bins, bands expect {k}",
                psd_frame.len()
            )));
        }
        for (sum, band) in self.sums.iter_mut().zip(&self.bands.bands) {
            *sum += psd_frame[band.bins.clone()].iter().sum::<f64>();
        }
        self.frames += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<f64>> {
        if self.frames == 0 {
            return Err(Error::EmptySegment);
        }
        let m = self.frames as f64;
        Ok(self
            .sums
            .into_iter()
            .map(|s| 10.0 * (s / m).log10())
            .collect())
    }
}

/// Third-octave levels of a segment: band power per frame, linear mean over
/// frames, then dB.
pub fn tol<R: AsRef<[f64]>>(psd_frames: &[R], bands: &TolBandSet) -> Result<Vec<f64>> {
    let mut acc = TolAccumulator::new(bands);
    for frame in psd_frames {
        acc.push(frame.as_ref())?;
    }
    acc.finish()
}

/// Broadband level `10·log10(Σ welch)`.
pub fn spl(welch: &WelchVector) -> Result<f64> {
    if welch.values.is_empty() {
        return Err(Error::Shape("empty Welch vector".into()));
    }
    Ok(10.0 * welch.values.iter().sum::<f64>().log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force band enumeration straight from the retention rule.
    fn expected_band_count(fs: f64, low: f64, high: f64) -> usize {
        (0..60)
            .filter(|&i| {
                let c = 10f64.powf(i as f64 / 10.0);
                let (lo, hi) = (c * 10f64.powf(-0.05), c * 10f64.powf(0.05));
                hi < fs / 2.0 && low <= hi && lo < high
            })
            .count()
    }

    #[test]
    fn bands_at_1500_hz() {
        let set = tol_bands(1500.0, 1500, 1.0, 750.0).unwrap();
        assert_eq!(set.len(), 29);
        assert_eq!(set.len(), expected_band_count(1500.0, 1.0, 750.0));
        let idx: Vec<_> = set.bands.iter().map(|b| b.index).collect();
        assert_eq!(idx, (0..29).collect::<Vec<_>>());
        let last = &set.bands[28];
        assert!((last.center - 630.957).abs() < 1e-3);
        assert!(last.upper < 750.0 && (last.upper - 707.946).abs() < 1e-3);

        let b = &set.bands[20];
        assert!((b.center - 100.0).abs() < 1e-9);
        assert!((b.lower - 89.125).abs() < 1e-3);
        assert!((b.upper - 112.202).abs() < 1e-3);
        assert_eq!(b.bins, 89..112);
        assert_eq!(nominal_center(20), 100.0);
        assert_eq!(nominal_center(18), 63.0);
    }

    #[test]
    fn top_candidate_is_far_above_audio_rates() {
        let c59 = 10f64.powf(5.9);
        assert!((c59 - 794_328.2).abs() < 1.0);
        let set = tol_bands(192_000.0, 192_000, 1.0, 96_000.0).unwrap();
        assert!(set.bands.iter().all(|b| b.index < 59));
    }

    #[test]
    fn range_restriction() {
        let set = tol_bands(1500.0, 1500, 20.0, 200.0).unwrap();
        assert_eq!(set.len(), expected_band_count(1500.0, 20.0, 200.0));
        assert!(set.bands.iter().all(|b| b.upper >= 20.0 && b.lower < 200.0));
    }

    #[test]
    fn precondition_messages() {
        let e = tol_bands(1500.0, 1024, 1.0, 750.0).unwrap_err();
        assert!(e.to_string().contains("should be of size sampleRate"));
        let e = tol_bands(1500.0, 1500, 0.5, 750.0).unwrap_err();
        assert!(e.to_string().contains("should be higher than 1.0"));
        let e = tol_bands(1500.0, 1500, 1.0, 751.0).unwrap_err();
        assert!(e.to_string().contains("should be lower than sampleRate/2"));
        let e = tol_bands(1500.0, 1500, 300.0, 200.0).unwrap_err();
        assert!(e.to_string().contains("lowFreq is higher than highFreq"));
        let e = check_tol_signal_length(1499, 1500.0).unwrap_err();
        assert!(e.to_string().contains("should be longer than a second"));
        assert!(check_tol_signal_length(1500, 1500.0).is_ok());
    }

    fn band_at(lo: usize, hi: usize, nfft: usize) -> TolBandSet {
        TolBandSet {
            bands: vec![TolBand {
                index: 20,
                center: 100.0,
                lower: lo as f64,
                upper: hi as f64,
                bins: lo..hi,
            }],
            sample_rate: nfft as f64,
            nfft,
        }
    }

    #[test]
    fn tol_examples() {
        let bands = band_at(89, 112, 1500);
        let v = tol(&[vec![1.0; 751]], &bands).unwrap();
        assert!((v[0] - 10.0 * 23f64.log10()).abs() < 1e-12);
        assert!((v[0] - 13.617).abs() < 1e-3);

        let v = tol(&[vec![0.0; 751]], &bands).unwrap();
        assert_eq!(v[0], f64::NEG_INFINITY);

        let mut a = vec![0.0; 751];
        a[100] = 1.0;
        let mut b = vec![0.0; 751];
        b[100] = 3.0;
        let v = tol(&[a, b], &bands).unwrap();
        assert!((v[0] - 3.0103).abs() < 1e-4);

        assert!(matches!(
            tol(&[vec![0.0; 10]], &bands),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            tol::<Vec<f64>>(&[], &bands),
            Err(Error::EmptySegment)
        ));
    }

    #[test]
    fn spl_examples() {
        let w = |v: Vec<f64>| WelchVector {
            values: v,
            n_frames_averaged: 1,
        };
        assert_eq!(spl(&w(vec![1.0])).unwrap(), 0.0);
        assert!((spl(&w(vec![1.0; 3])).unwrap() - 4.7712).abs() < 1e-4);
        assert_eq!(spl(&w(vec![0.0; 3])).unwrap(), f64::NEG_INFINITY);
        assert!(spl(&w(vec![])).is_err());
    }

    #[test]
    fn band_geometry_invariants() {
        for fs in [1500.0, 8000.0, 44100.0, 96000.0] {
            let set = tol_bands(fs, fs as usize, 1.0, fs / 2.0).unwrap();
            let k = one_sided_len(set.nfft);
            let ratio = 10f64.powf(0.1);
            for b in &set.bands {
                assert!(((b.upper / b.lower) - ratio).abs() <= 1e-12 * ratio);
                let gm = (b.upper * b.lower).sqrt();
                assert!((gm - b.center).abs() <= 1e-12 * b.center);
                assert!(b.bins.end <= k);
            }
            for pair in set.bands.windows(2) {
                assert!(pair[0].bins.end <= pair[1].bins.start);
            }
        }
    }

    proptest! {
        #[test]
        fn scaling_shifts_levels(
            psd in prop::collection::vec(0.001f64..10.0, 751),
            c in 1e-6f64..1e6,
        ) {
            let bands = tol_bands(1500.0, 1500, 1.0, 750.0).unwrap();
            let scaled: Vec<f64> = psd.iter().map(|v| v * c).collect();
            let shift = 10.0 * c.log10();
            let a = tol(&[&psd], &bands).unwrap();
            let b = tol(&[&scaled], &bands).unwrap();
            for (x, y) in a.iter().zip(&b) {
                if x.is_finite() {
                    prop_assert!((y - x - shift).abs() < 1e-10);
                }
            }
            let w = |v: Vec<f64>| WelchVector { values: v, n_frames_averaged: 1 };
            let d = spl(&w(scaled)).unwrap() - spl(&w(psd)).unwrap();
            prop_assert!((d - shift).abs() < 1e-10);
        }

        #[test]
        fn single_band_support_matches_spl(
            vals in prop::collection::vec(0.01f64..10.0, 23),
            frames in 1usize..5,
        ) {
            let bands = tol_bands(1500.0, 1500, 1.0, 750.0).unwrap();
            let rows: Vec<Vec<f64>> = (0..frames)
                .map(|m| {
                    let mut row = vec![0.0; 751];
                    for (j, v) in vals.iter().enumerate() {
                        row[89 + j] = v * (m + 1) as f64;
                    }
                    row
                })
                .collect();
            let levels = tol(&rows, &bands).unwrap();
            let welch = crate::spectral::welch(&rows).unwrap();
            let restricted = WelchVector {
                values: welch.values[89..112].to_vec(),
                n_frames_averaged: frames,
            };
            prop_assert!((levels[20] - spl(&restricted).unwrap()).abs() < 1e-10);
        }
    }
}
