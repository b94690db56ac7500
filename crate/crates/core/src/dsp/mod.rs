//! Pre-processing and feature extraction.
//!
//! ```text
//! raw trial ─► band-pass (causal biquads) ─► overlapping windows
//!           ─► zero-padded FFT magnitude ─► band slice ─► min-max to [0, 1]
//! ```

mod features;
mod fft;
mod filter;

pub use features::{band_bins, extract_features, FeatureVector};
pub use fft::{fft_in_place, fft_magnitude, fft_real};
pub use filter::{design_bandpass, BandpassFilter, Biquad};

use thiserror::Error;

use crate::eegio::{self, EegRecording, LabelError, LabeledExample, RecordingError, TrialMarker};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid band edges: [{f_lo}, {f_hi}] Hz at fs={fs_hz} Hz")]
    InvalidBandEdges { f_lo: f64, f_hi: f64, fs_hz: f64 },
    #[error("unsupported filter order {0} (expected 2, 4 or 8)")]
    UnsupportedOrder(usize),
    #[error("section {0} is unstable")]
    UnstableSection(usize),
    #[error("non-finite input sample at index {0}")]
    NonFiniteInput(usize),
    #[error("invalid window spec: length {window_len}, offset {offset}")]
    InvalidWindowSpec { window_len: usize, offset: usize },
    #[error("signal of {len} samples is shorter than the {window_len}-sample window")]
    SignalTooShort { len: usize, window_len: usize },
    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("FFT length {n_fft} is shorter than the {window}-sample window")]
    FftTooShort { n_fft: usize, window: usize },
    #[error("spectrum has {found} bins, expected {expected}")]
    SpectrumLength { expected: usize, found: usize },
    #[error("no FFT bins inside [{f_lo}, {f_hi}] Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_len: usize,
    pub offset: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, offset: usize) -> Result<Self, DspError> {
        if window_len == 0 || offset == 0 || offset > window_len {
            return Err(DspError::InvalidWindowSpec { window_len, offset });
        }
        Ok(Self { window_len, offset })
    }

    /// Windows that fit in a signal of `len` samples.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.offset + 1
        }
    }
}

/// Contiguous copies starting at `0, offset, 2·offset, …`.
pub fn segment_windows(x: &[f64], spec: WindowSpec) -> Result<Vec<Vec<f64>>, DspError> {
    if spec.window_len == 0 || spec.offset == 0 || spec.offset > spec.window_len {
        return Err(DspError::InvalidWindowSpec {
            window_len: spec.window_len,
            offset: spec.offset,
        });
    }
    if x.len() < spec.window_len {
        return Err(DspError::SignalTooShort {
            len: x.len(),
            window_len: spec.window_len,
        });
    }
    Ok((0..spec.count(x.len()))
        .map(|i| x[i * spec.offset..i * spec.offset + spec.window_len].to_vec())
        .collect())
}

/// Knobs of the feature pipeline. Defaults: 3 s windows at 256 Hz, 16-sample
/// stride, 4th-order 8–16 Hz band-pass, 1024-point FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub fs_hz: u32,
    pub window: WindowSpec,
    pub n_fft: usize,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub filter_order: usize,
    pub class_freqs: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fs_hz: 256,
            window: WindowSpec {
                window_len: 768,
                offset: 16,
            },
            n_fft: 1024,
            band_lo_hz: 8.0,
            band_hi_hz: 16.0,
            filter_order: 4,
            class_freqs: eegio::DEFAULT_CLASS_FREQS.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// Same pipeline with a window of `seconds` at the configured rate.
    pub fn with_window_seconds(mut self, seconds: f64) -> Result<Self, DspError> {
        let len = seconds * self.fs_hz as f64;
        if len.is_nan() || len <= 0.0 || (len - len.round()).abs() > 1e-9 {
            return Err(DspError::InvalidWindowSpec {
                window_len: len.max(0.0) as usize,
                offset: self.window.offset,
            });
        }
        self.window = WindowSpec::new(len.round() as usize, self.window.offset)?;
        Ok(self)
    }

    /// Number of features per window.
    pub fn feature_len(&self) -> Result<usize, DspError> {
        Ok(band_bins(self.fs_hz, self.n_fft, self.band_lo_hz, self.band_hi_hz)?.count())
    }
}

/// Pipeline with its filter designed once.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    config: PipelineConfig,
    filter: BandpassFilter,
}

impl FeaturePipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, DspError> {
        let filter = design_bandpass(
            config.fs_hz as f64,
            config.band_lo_hz,
            config.band_hi_hz,
            config.filter_order,
        )?;
        if config.window.window_len > config.n_fft {
            return Err(DspError::FftTooShort {
                n_fft: config.n_fft,
                window: config.window.window_len,
            });
        }
        config.feature_len()?;
        Ok(Self { config, filter })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn filter(&self) -> &BandpassFilter {
        &self.filter
    }

    /// Features of one already-filtered window.
    pub fn window_features(&self, window: &[f64]) -> Result<FeatureVector, DspError> {
        let c = &self.config;
        let mag = fft_magnitude(window, c.n_fft)?;
        extract_features(&mag, c.fs_hz, c.n_fft, c.band_lo_hz, c.band_hi_hz)
    }

    /// Filter the whole signal, then one feature vector per window.
    pub fn signal_features(&self, x: &[f64]) -> Result<Vec<FeatureVector>, DspError> {
        let filtered = self.filter.apply(x)?;
        let windows = segment_windows(&filtered, self.config.window)?;
        map_windows(&windows, |w| self.window_features(w))
    }

    /// Online path: filter the acquired block and featurize its final window.
    /// Leading samples beyond the window act as filter pre-roll.
    pub fn latest_window_features(&self, x: &[f64]) -> Result<FeatureVector, DspError> {
        let len = self.config.window.window_len;
        if x.len() < len {
            return Err(DspError::SignalTooShort {
                len: x.len(),
                window_len: len,
            });
        }
        let filtered = self.filter.apply(x)?;
        self.window_features(&filtered[filtered.len() - len..])
    }

    pub fn preprocess_trial(
        &self,
        rec: &EegRecording,
        channel: &str,
        trial: &TrialMarker,
    ) -> Result<Vec<LabeledExample>, PipelineError> {
        let ch = rec.channel_index(channel)?;
        let class_index = eegio::label_of_frequency(trial.stim_freq_hz, &self.config.class_freqs)?;
        let signal = rec.trial_signal(ch, trial);
        Ok(self
            .signal_features(&signal)?
            .into_iter()
            .map(|features| LabeledExample {
                features,
                class_index,
            })
            .collect())
    }

    /// Every trial of the recording, in marker order.
    pub fn preprocess_recording(
        &self,
        rec: &EegRecording,
        channel: &str,
    ) -> Result<Vec<LabeledExample>, PipelineError> {
        let mut out = Vec::new();
        for trial in rec.trials() {
            out.extend(self.preprocess_trial(rec, channel, trial)?);
        }
        Ok(out)
    }
}

#[cfg(feature = "parallel")]
fn map_windows<F>(windows: &[Vec<f64>], f: F) -> Result<Vec<FeatureVector>, DspError>
where
    F: Fn(&[f64]) -> Result<FeatureVector, DspError> + Sync,
{
    use rayon::prelude::*;
    windows.par_iter().map(|w| f(w)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_windows<F>(windows: &[Vec<f64>], f: F) -> Result<Vec<FeatureVector>, DspError>
where
    F: Fn(&[f64]) -> Result<FeatureVector, DspError>,
{
    windows.iter().map(|w| f(w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 10.0 * (2.0 * PI * freq * i as f64 / 256.0 + 0.3).sin())
            .collect()
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::new(768, 16).unwrap();
        assert_eq!(segment_windows(&vec![0.0; 1024], spec).unwrap().len(), 17);
        assert_eq!(segment_windows(&vec![0.0; 768], spec).unwrap().len(), 1);
        assert_eq!(
            segment_windows(&vec![0.0; 767], spec),
            Err(DspError::SignalTooShort {
                len: 767,
                window_len: 768
            })
        );
    }

    #[test]
    fn windows_are_contiguous_copies() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let w = segment_windows(&x, WindowSpec::new(10, 7).unwrap()).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w[2], (14..24).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(0, 1).is_err());
        assert!(WindowSpec::new(10, 0).is_err());
        assert!(WindowSpec::new(10, 11).is_err());
        let c = PipelineConfig::default();
        assert_eq!(
            c.clone()
                .with_window_seconds(2.0)
                .unwrap()
                .window
                .window_len,
            512
        );
        assert_eq!(
            c.clone()
                .with_window_seconds(1.0)
                .unwrap()
                .window
                .window_len,
            256
        );
        assert!(c.with_window_seconds(1.001).is_err());
    }

    #[test]
    fn trial_yields_17_examples_of_one_class() {
        let signal = tone(11.25, 1024);
        let rec = EegRecording::new(
            256,
            vec!["Oz".into()],
            signal,
            vec![TrialMarker {
                onset_sample: 0,
                length_samples: 1024,
                stim_freq_hz: 11.25,
            }],
        )
        .unwrap();
        let p = FeaturePipeline::new(PipelineConfig::default()).unwrap();
        let ex = p.preprocess_trial(&rec, "Oz", &rec.trials()[0]).unwrap();
        assert_eq!(ex.len(), 17);
        for e in &ex {
            assert_eq!(e.class_index, 1);
            assert_eq!(e.features.len(), 33);
            let k = e.features.argmax().unwrap() + 32;
            assert_eq!(k, 45);
        }
        assert!(matches!(
            p.preprocess_trial(&rec, "Cz", &rec.trials()[0]),
            Err(PipelineError::Recording(RecordingError::UnknownChannel(_)))
        ));
    }

    #[test]
    fn unknown_trial_frequency_is_reported() {
        let rec = EegRecording::new(
            256,
            vec!["Oz".into()],
            tone(10.0, 1024),
            vec![TrialMarker {
                onset_sample: 0,
                length_samples: 1024,
                stim_freq_hz: 10.0,
            }],
        )
        .unwrap();
        let p = FeaturePipeline::new(PipelineConfig::default()).unwrap();
        assert!(matches!(
            p.preprocess_trial(&rec, "Oz", &rec.trials()[0]),
            Err(PipelineError::Label(LabelError::UnknownFrequency(_)))
        ));
    }

    #[test]
    fn latest_window_uses_tail() {
        let p = FeaturePipeline::new(PipelineConfig::default()).unwrap();
        let x = tone(13.25, 1024);
        let online = p.latest_window_features(&x).unwrap();
        let offline = p.signal_features(&x).unwrap();
        assert_eq!(&online, offline.last().unwrap());
    }
}
