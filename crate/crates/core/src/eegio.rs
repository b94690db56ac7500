//! EEG recordings on disk, trial/label bookkeeping and dataset splitting.
//!
//! Recording file layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes   "SSVEPREC"
//! version      u16       1
//! fs_hz        u32
//! n_channels   u16
//! labels       n_channels × 8 bytes, ASCII, right-padded with spaces
//! n_samples    u64
//! n_trials     u32
//! trial table  n_trials × (u64 onset, u64 length, f64 stim_freq_hz)
//! samples      n_samples × n_channels f64, time-major (channel-interleaved)
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::dsp::FeatureVector;
use crate::rng::SeededRng;

pub const RECORDING_MAGIC: &[u8; 8] = b"SSVEPREC";
pub const RECORDING_VERSION: u16 = 1;
const LABEL_BYTES: usize = 8;

/// Stimulus frequencies of the three command classes, ascending (class 0, 1, 2).
pub const DEFAULT_CLASS_FREQS: [f64; 3] = [9.25, 11.25, 13.25];

/// Tolerance for matching a marker frequency to a class frequency.
pub const FREQ_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not a recording file")]
    BadMagic,
    #[error("unsupported recording version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("non-finite sample at index {sample}, channel {channel}")]
    NonFiniteSample { sample: usize, channel: usize },
    #[error("marker out of bounds: trial {trial} spans [{onset}, {end}) but recording has {n_samples} samples")]
    MarkerOutOfBounds {
        trial: usize,
        onset: u64,
        end: u64,
        n_samples: u64,
    },
    #[error("invalid trial {trial}: {reason}")]
    InvalidTrial { trial: usize, reason: String },
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("unknown stimulus frequency {0} Hz")]
    UnknownFrequency(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("no examples to split")]
    Empty,
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("class {class} has only {count} example(s); at least {needed} required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMarker {
    pub onset_sample: u64,
    pub length_samples: u64,
    pub stim_freq_hz: f64,
}

impl TrialMarker {
    pub fn end(&self) -> u64 {
        self.onset_sample + self.length_samples
    }
}

/// Multi-trial time series. Samples are stored time-major:
/// `samples[t * n_channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    fs_hz: u32,
    channel_labels: Vec<String>,
    samples: Vec<f64>,
    trials: Vec<TrialMarker>,
}

impl EegRecording {
    pub fn new(
        fs_hz: u32,
        channel_labels: Vec<String>,
        samples: Vec<f64>,
        trials: Vec<TrialMarker>,
    ) -> Result<Self, RecordingError> {
        if fs_hz == 0 {
            return Err(RecordingError::MalformedHeader(
                "fs_hz must be positive".into(),
            ));
        }
        if channel_labels.is_empty() || channel_labels.len() > u16::MAX as usize {
            return Err(RecordingError::MalformedHeader(format!(
                "channel count {} out of range",
                channel_labels.len()
            )));
        }
        for label in &channel_labels {
            if label.is_empty()
                || label.len() > LABEL_BYTES
                || !label.bytes().all(|b| b.is_ascii_graphic())
            {
                return Err(RecordingError::MalformedHeader(format!(
                    "channel label {label:?} must be 1-8 printable ASCII characters"
                )));
            }
        }
        let n_channels = channel_labels.len();
        if !samples.len().is_multiple_of(n_channels) {
            return Err(RecordingError::MalformedHeader(format!(
                "{} samples do not divide into {} channels",
                samples.len(),
                n_channels
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(RecordingError::NonFiniteSample {
                sample: i / n_channels,
                channel: i % n_channels,
            });
        }
        let n_samples = (samples.len() / n_channels) as u64;
        for (i, t) in trials.iter().enumerate() {
            check_marker(i, t, n_samples)?;
        }
        Ok(Self {
            fs_hz,
            channel_labels,
            samples,
            trials,
        })
    }

    pub fn fs_hz(&self) -> u32 {
        self.fs_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.n_channels()
    }

    pub fn trials(&self) -> &[TrialMarker] {
        &self.trials
    }

    /// Raw interleaved samples.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel_index(&self, label: &str) -> Result<usize, RecordingError> {
        self.channel_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
            .ok_or_else(|| RecordingError::UnknownChannel(label.to_string()))
    }

    /// Copy of one channel over `[start, end)`.
    pub fn channel_slice(&self, channel: usize, start: usize, end: usize) -> Vec<f64> {
        let n_ch = self.n_channels();
        (start..end)
            .map(|t| self.samples[t * n_ch + channel])
            .collect()
    }

    /// Samples of one trial on one channel.
    pub fn trial_signal(&self, channel: usize, trial: &TrialMarker) -> Vec<f64> {
        self.channel_slice(channel, trial.onset_sample as usize, trial.end() as usize)
    }
}

fn check_marker(i: usize, t: &TrialMarker, n_samples: u64) -> Result<(), RecordingError> {
    if t.length_samples == 0 {
        return Err(RecordingError::InvalidTrial {
            trial: i,
            reason: "zero length".into(),
        });
    }
    if !t.stim_freq_hz.is_finite() || t.stim_freq_hz <= 0.0 {
        return Err(RecordingError::InvalidTrial {
            trial: i,
            reason: format!(
                "stimulus frequency {} is not a positive number",
                t.stim_freq_hz
            ),
        });
    }
    match t.onset_sample.checked_add(t.length_samples) {
        Some(end) if end <= n_samples => Ok(()),
        _ => Err(RecordingError::MarkerOutOfBounds {
            trial: i,
            onset: t.onset_sample,
            end: t.onset_sample.saturating_add(t.length_samples),
            n_samples,
        }),
    }
}

/// Serializes a recording to the canonical byte layout.
pub fn encode_recording(rec: &EegRecording) -> Vec<u8> {
    let n_ch = rec.n_channels();
    let mut out = Vec::with_capacity(
        8 + 2 + 4 + 2 + LABEL_BYTES * n_ch + 8 + 4 + 24 * rec.trials.len() + 8 * rec.samples.len(),
    );
    out.extend_from_slice(RECORDING_MAGIC);
    out.extend_from_slice(&RECORDING_VERSION.to_le_bytes());
    out.extend_from_slice(&rec.fs_hz.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    for label in &rec.channel_labels {
        let mut field = [b' '; LABEL_BYTES];
        field[..label.len()].copy_from_slice(label.as_bytes());
        out.extend_from_slice(&field);
    }
    out.extend_from_slice(&(rec.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&(rec.trials.len() as u32).to_le_bytes());
    for t in &rec.trials {
        out.extend_from_slice(&t.onset_sample.to_le_bytes());
        out.extend_from_slice(&t.length_samples.to_le_bytes());
        out.extend_from_slice(&t.stim_freq_hz.to_le_bytes());
    }
    for v in &rec.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], RecordingError> {
        if self.buf.len() - self.pos < n {
            return Err(RecordingError::MalformedHeader(format!(
                "file ends inside {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, RecordingError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, RecordingError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, RecordingError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, RecordingError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses the canonical byte layout.
pub fn decode_recording(bytes: &[u8]) -> Result<EegRecording, RecordingError> {
    if bytes.len() < RECORDING_MAGIC.len() || &bytes[..8] != RECORDING_MAGIC {
        return Err(RecordingError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 8 };
    let version = r.u16("version")?;
    if version != RECORDING_VERSION {
        return Err(RecordingError::UnsupportedVersion(version));
    }
    let fs_hz = r.u32("fs_hz")?;
    if fs_hz == 0 {
        return Err(RecordingError::MalformedHeader("fs_hz is zero".into()));
    }
    let n_ch = r.u16("channel count")? as usize;
    if n_ch == 0 {
        return Err(RecordingError::MalformedHeader(
            "channel count is zero".into(),
        ));
    }
    let mut labels = Vec::with_capacity(n_ch);
    for _ in 0..n_ch {
        let raw = r.take(LABEL_BYTES, "channel labels")?;
        let label = std::str::from_utf8(raw)
            .map_err(|_| RecordingError::MalformedHeader("channel label is not ASCII".into()))?
            .trim_end_matches(' ')
            .to_string();
        labels.push(label);
    }
    let n_samples = r.u64("sample count")?;
    let n_trials = r.u32("trial count")? as usize;
    let table_bytes = n_trials as u64 * 24;
    if ((bytes.len() - r.pos) as u64) < table_bytes {
        return Err(RecordingError::MalformedHeader(
            "file ends inside trial table".into(),
        ));
    }
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        trials.push(TrialMarker {
            onset_sample: r.u64("trial table")?,
            length_samples: r.u64("trial table")?,
            stim_freq_hz: r.f64("trial table")?,
        });
    }

    let payload = n_samples
        .checked_mul(n_ch as u64)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| RecordingError::MalformedHeader("sample count overflows".into()))?;
    let remaining = (bytes.len() - r.pos) as u64;
    if remaining < payload {
        return Err(RecordingError::Truncated {
            expected: payload,
            found: remaining,
        });
    }
    if remaining > payload {
        return Err(RecordingError::TrailingBytes(remaining - payload));
    }
    for (i, t) in trials.iter().enumerate() {
        check_marker(i, t, n_samples)?;
    }
    let samples: Vec<f64> = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EegRecording::new(fs_hz, labels, samples, trials)
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<EegRecording, RecordingError> {
    let bytes = fs::read(path)?;
    decode_recording(&bytes)
}

pub fn write_recording(rec: &EegRecording, path: impl AsRef<Path>) -> Result<(), RecordingError> {
    if let Some(i) = rec.samples.iter().position(|v| !v.is_finite()) {
        let n_ch = rec.n_channels();
        return Err(RecordingError::NonFiniteSample {
            sample: i / n_ch,
            channel: i % n_ch,
        });
    }
    fs::write(path, encode_recording(rec))?;
    Ok(())
}

/// Index of `freq_hz` in the ascending class frequency list.
pub fn label_of_frequency(freq_hz: f64, class_freqs: &[f64]) -> Result<usize, LabelError> {
    class_freqs
        .iter()
        .position(|&f| (f - freq_hz).abs() <= FREQ_MATCH_TOL)
        .ok_or(LabelError::UnknownFrequency(freq_hz))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
}

/// Groups example indices by class, in input order.
pub(crate) fn indices_by_class(examples: &[LabeledExample]) -> Vec<Vec<usize>> {
    let n_classes = examples
        .iter()
        .map(|e| e.class_index + 1)
        .max()
        .unwrap_or(0);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, e) in examples.iter().enumerate() {
        by_class[e.class_index].push(i);
    }
    by_class
}

/// Stratified, seeded train/test split.
///
/// Each class is shuffled independently. Per-class train counts start at
/// `floor(n_c * fraction)`; the remaining `round(n * fraction) - Σ floor` slots go
/// to the classes with the largest fractional parts (ties to the lower class).
/// Both halves keep the original example order.
pub fn split_dataset(
    examples: &[LabeledExample],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, SplitError> {
    if examples.is_empty() {
        return Err(SplitError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::BadFraction(train_fraction));
    }
    let by_class = indices_by_class(examples);
    for (class, idx) in by_class.iter().enumerate() {
        if !idx.is_empty() && idx.len() < 2 {
            return Err(SplitError::ClassTooSmall {
                class,
                count: idx.len(),
                needed: 2,
            });
        }
    }

    let total_train = (examples.len() as f64 * train_fraction).round() as usize;
    let exact: Vec<f64> = by_class
        .iter()
        .map(|idx| idx.len() as f64 * train_fraction)
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().take(total_train.saturating_sub(assigned)) {
        if counts[c] < by_class[c].len() {
            counts[c] += 1;
        }
    }

    let mut rng = SeededRng::new(seed);
    let mut in_train = vec![false; examples.len()];
    for (class, idx) in by_class.iter().enumerate() {
        let mut shuffled = idx.clone();
        rng.shuffle(&mut shuffled);
        for &i in &shuffled[..counts[class]] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in examples.iter().enumerate() {
        if in_train[i] {
            train.push(e.clone());
        } else {
            test.push(e.clone());
        }
    }
    Ok(DatasetSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_1ch(n: usize, trials: Vec<TrialMarker>) -> EegRecording {
        let samples = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        EegRecording::new(256, vec!["Oz".into()], samples, trials).unwrap()
    }

    fn example(class_index: usize, tag: f64) -> LabeledExample {
        LabeledExample {
            features: FeatureVector {
                values: vec![tag],
                bin_freqs_hz: vec![8.0],
                fs_hz: 256,
                n_fft: 1024,
            },
            class_index,
        }
    }

    #[test]
    fn read_echoes_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.rec");
        let rec = rec_1ch(
            1024,
            vec![TrialMarker {
                onset_sample: 0,
                length_samples: 1024,
                stim_freq_hz: 9.25,
            }],
        );
        write_recording(&rec, &path).unwrap();
        let back = read_recording(&path).unwrap();
        assert_eq!(back.n_samples(), 1024);
        assert_eq!(back.fs_hz(), 256);
        assert_eq!(back.trials().len(), 1);
        assert_eq!(back, rec);
    }

    #[test]
    fn empty_trial_list_is_valid() {
        let rec = rec_1ch(16, vec![]);
        let bytes = encode_recording(&rec);
        // trial count sits right after the sample count
        let off = 8 + 2 + 4 + 2 + 8 + 8;
        assert_eq!(&bytes[off..off + 4], &0u32.to_le_bytes());
        assert_eq!(decode_recording(&bytes).unwrap(), rec);
    }

    #[test]
    fn two_channels_are_interleaved() {
        let samples = vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        let rec = EegRecording::new(128, vec!["O1".into(), "O2".into()], samples, vec![]).unwrap();
        let bytes = encode_recording(&rec);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 2);
        assert_eq!(&bytes[16..24], b"O1      ");
        let payload = &bytes[bytes.len() - 48..];
        let vals: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0]);
        assert_eq!(rec.channel_slice(1, 0, 3), vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn marker_out_of_bounds_is_reported() {
        let rec = rec_1ch(100, vec![]);
        let mut bytes = encode_recording(&rec);
        // splice in one trial: onset 90, length 20
        let off = 8 + 2 + 4 + 2 + 8 + 8;
        bytes[off..off + 4].copy_from_slice(&1u32.to_le_bytes());
        let mut entry = Vec::new();
        entry.extend_from_slice(&90u64.to_le_bytes());
        entry.extend_from_slice(&20u64.to_le_bytes());
        entry.extend_from_slice(&9.25f64.to_le_bytes());
        bytes.splice(off + 4..off + 4, entry);
        let err = decode_recording(&bytes).unwrap_err();
        assert!(
            matches!(err, RecordingError::MarkerOutOfBounds { trial: 0, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("marker out of bounds"));
    }

    #[test]
    fn malformations_are_distinct() {
        let rec = rec_1ch(32, vec![]);
        let good = encode_recording(&rec);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_recording(&bad_magic),
            Err(RecordingError::BadMagic)
        ));

        let mut bad_version = good.clone();
        bad_version[8] = 9;
        assert!(matches!(
            decode_recording(&bad_version),
            Err(RecordingError::UnsupportedVersion(9))
        ));

        assert!(matches!(
            decode_recording(&good[..20]),
            Err(RecordingError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_recording(&good[..good.len() - 3]),
            Err(RecordingError::Truncated { .. })
        ));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(
            decode_recording(&trailing),
            Err(RecordingError::TrailingBytes(1))
        ));

        let mut nan = good.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            decode_recording(&nan),
            Err(RecordingError::NonFiniteSample {
                sample: 31,
                channel: 0
            })
        ));
    }

    #[test]
    fn non_finite_sample_rejected_before_writing() {
        let rec = EegRecording {
            fs_hz: 256,
            channel_labels: vec!["Oz".into()],
            samples: vec![0.0, f64::INFINITY],
            trials: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.rec");
        assert!(matches!(
            write_recording(&rec, &path),
            Err(RecordingError::NonFiniteSample { sample: 1, .. })
        ));
        assert!(!path.exists());
    }

    #[test]
    fn frequency_labels() {
        let f = DEFAULT_CLASS_FREQS;
        assert_eq!(label_of_frequency(9.25, &f), Ok(0));
        assert_eq!(label_of_frequency(11.25, &f), Ok(1));
        assert_eq!(label_of_frequency(13.25, &f), Ok(2));
        assert_eq!(
            label_of_frequency(10.0, &f),
            Err(LabelError::UnknownFrequency(10.0))
        );
    }

    #[test]
    fn split_sizes_for_full_dataset() {
        let examples: Vec<_> = (0..7650).map(|i| example(i % 3, i as f64)).collect();
        let split = split_dataset(&examples, 0.8, 1).unwrap();
        assert_eq!(split.train.len(), 6120);
        assert_eq!(split.test.len(), 1530);
    }

    #[test]
    fn balanced_thirty_gives_eight_and_two_per_class() {
        let examples: Vec<_> = (0..30).map(|i| example(i / 10, i as f64)).collect();
        let split = split_dataset(&examples, 0.8, 99).unwrap();
        for c in 0..3 {
            assert_eq!(split.train.iter().filter(|e| e.class_index == c).count(), 8);
            assert_eq!(split.test.iter().filter(|e| e.class_index == c).count(), 2);
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let examples: Vec<_> = (0..97).map(|i| example(i % 3, i as f64)).collect();
        let a = split_dataset(&examples, 0.8, 5).unwrap();
        let b = split_dataset(&examples, 0.8, 5).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&examples, 0.8, 6).unwrap();
        assert_ne!(a.train, c.train);
        for e in &a.test {
            assert!(!a
                .train
                .iter()
                .any(|t| t.features.values == e.features.values));
        }
    }

    #[test]
    fn split_errors() {
        assert_eq!(split_dataset(&[], 0.8, 0), Err(SplitError::Empty));
        let ex = vec![example(0, 0.0), example(0, 1.0), example(1, 2.0)];
        assert_eq!(
            split_dataset(&ex, 0.8, 0),
            Err(SplitError::ClassTooSmall {
                class: 1,
                count: 1,
                needed: 2
            })
        );
        assert_eq!(
            split_dataset(&ex, 1.0, 0),
            Err(SplitError::BadFraction(1.0))
        );
    }
}
