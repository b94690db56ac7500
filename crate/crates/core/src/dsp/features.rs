use serde::{Deserialize, Serialize};

use super::DspError;

/// Min-max normalized band slice of a magnitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub bin_freqs_hz: Vec<f64>,
    pub fs_hz: u32,
    pub n_fft: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position of the largest value (first one on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }
}

const BIN_TOL_HZ: f64 = 1e-9;

/// Inclusive FFT bin range whose centers fall inside `[f_lo, f_hi]`.
pub fn band_bins(
    fs_hz: u32,
    n_fft: usize,
    f_lo: f64,
    f_hi: f64,
) -> Result<std::ops::RangeInclusive<usize>, DspError> {
    let nyquist = fs_hz as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo <= f_hi && f_hi <= nyquist) {
        return Err(DspError::InvalidBandEdges {
            f_lo,
            f_hi,
            fs_hz: fs_hz as f64,
        });
    }
    let df = fs_hz as f64 / n_fft as f64;
    let first = ((f_lo - BIN_TOL_HZ) / df).ceil().max(0.0) as usize;
    let last = (((f_hi + BIN_TOL_HZ) / df).floor() as usize).min(n_fft / 2);
    if first > last {
        return Err(DspError::EmptyBand { f_lo, f_hi });
    }
    Ok(first..=last)
}

/// Keeps bins inside the band and rescales them to `[0, 1]`. A flat slice maps to zeros.
pub fn extract_features(
    mag: &[f64],
    fs_hz: u32,
    n_fft: usize,
    f_lo: f64,
    f_hi: f64,
) -> Result<FeatureVector, DspError> {
    if mag.len() != n_fft / 2 + 1 {
        return Err(DspError::SpectrumLength {
            expected: n_fft / 2 + 1,
            found: mag.len(),
        });
    }
    let bins = band_bins(fs_hz, n_fft, f_lo, f_hi)?;
    let df = fs_hz as f64 / n_fft as f64;
    let slice = &mag[bins.clone()];
    let (lo, hi) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if range > 0.0 && range > f64::EPSILON * hi.abs() {
        slice
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; slice.len()]
    };
    Ok(FeatureVector {
        values,
        bin_freqs_hz: bins.map(|k| k as f64 * df).collect(),
        fs_hz,
        n_fft,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_band_has_33_bins() {
        let mag = vec![1.0; 513];
        let fv = extract_features(&mag, 256, 1024, 8.0, 16.0).unwrap();
        assert_eq!(fv.len(), 33);
        assert_eq!(fv.bin_freqs_hz[0], 8.0);
        assert_eq!(fv.bin_freqs_hz[1], 8.25);
        assert_eq!(*fv.bin_freqs_hz.last().unwrap(), 16.0);
        assert_eq!(band_bins(256, 1024, 8.0, 16.0).unwrap(), 32..=64);
    }

    #[test]
    fn flat_band_normalizes_to_zero() {
        let mag = vec![3.5; 513];
        let fv = extract_features(&mag, 256, 1024, 8.0, 16.0).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dominant_bin_becomes_one() {
        let mut mag: Vec<f64> = (0..513).map(|k| 1.0 + 0.001 * k as f64).collect();
        mag[45] = 50.0;
        let fv = extract_features(&mag, 256, 1024, 8.0, 16.0).unwrap();
        let pos = 45 - 32;
        assert_eq!(fv.values[pos], 1.0);
        assert_eq!(fv.bin_freqs_hz[pos], 11.25);
        assert!(fv
            .values
            .iter()
            .enumerate()
            .all(|(i, &v)| i == pos || v < 1.0));
        assert_eq!(fv.values.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn empty_band_is_an_error() {
        let mag = vec![1.0; 5];
        assert!(matches!(
            extract_features(&mag, 256, 8, 33.0, 40.0),
            Err(DspError::EmptyBand { .. })
        ));
    }
}
