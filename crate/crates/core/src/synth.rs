//! Seeded synthetic SSVEP trials.
//!
//! A trial is a harmonic series at the stimulus frequency plus Gaussian noise,
//! half white and half 1/f-shaped by power:
//!
//! ```text
//! x[n] = Σ_{h=1..H} (A/h)·sin(2π·h·f·n/fs + φ) + g·noise[n]
//! ```
//!
//! The noise gain `g` is solved so that [`measure_band_snr`] on the finished
//! trial reports exactly the requested in-band SNR.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsp::{band_bins, fft_in_place, fft_real, DspError};
use crate::eegio::{EegRecording, RecordingError, TrialMarker};
use crate::rng::SeededRng;

pub const ANALYSIS_BAND_HZ: (f64, f64) = (8.0, 16.0);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("unsatisfiable SNR: {0}")]
    Unsatisfiable(String),
    #[error("frequency {0} Hz lies outside the analysis band")]
    OutsideBand(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub stim_freq_hz: f64,
    pub n_harmonics: usize,
    pub base_amp_uv: f64,
    pub phase_rad: f64,
    /// In-band SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub fs_hz: u32,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stim_freq_hz: 11.25,
            n_harmonics: 2,
            base_amp_uv: 10.0,
            phase_rad: 0.0,
            snr_db: 0.0,
            fs_hz: 256,
            duration_s: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn noiseless(mut self) -> Self {
        self.snr_db = f64::INFINITY;
        self
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs_hz as f64).round() as usize
    }

    fn validate(&self) -> Result<(), SynthError> {
        let nyquist = self.fs_hz as f64 / 2.0;
        if self.fs_hz == 0 {
            return Err(SynthError::InvalidConfig("fs_hz must be positive".into()));
        }
        if !(self.stim_freq_hz > 0.0 && self.stim_freq_hz < nyquist) {
            return Err(SynthError::InvalidConfig(format!(
                "stimulus frequency {} Hz must lie in (0, {nyquist})",
                self.stim_freq_hz
            )));
        }
        if self.duration_s.is_nan() || self.duration_s <= 0.0 || self.n_samples() == 0 {
            return Err(SynthError::InvalidConfig(
                "duration must be positive".into(),
            ));
        }
        if !(self.base_amp_uv > 0.0 && self.base_amp_uv.is_finite()) {
            return Err(SynthError::InvalidConfig(
                "base amplitude must be positive".into(),
            ));
        }
        if self.n_harmonics == 0 {
            return Err(SynthError::InvalidConfig(
                "need at least one harmonic".into(),
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(SynthError::Unsatisfiable(format!(
                "snr_db = {} cannot be met by finite noise",
                self.snr_db
            )));
        }
        Ok(())
    }
}

/// Noise-free harmonic series.
pub fn harmonic_signal(config: &SynthConfig) -> Vec<f64> {
    let fs = config.fs_hz as f64;
    let harmonics: Vec<usize> = (1..=config.n_harmonics)
        .filter(|&h| h as f64 * config.stim_freq_hz < fs / 2.0)
        .collect();
    (0..config.n_samples())
        .map(|n| {
            harmonics
                .iter()
                .map(|&h| {
                    let w = 2.0 * PI * h as f64 * config.stim_freq_hz / fs;
                    config.base_amp_uv / h as f64 * (w * n as f64 + config.phase_rad).sin()
                })
                .sum()
        })
        .collect()
}

fn unit_power(mut x: Vec<f64>) -> Vec<f64> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if p > 0.0 {
        let s = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= s);
    }
    x
}

/// Unit-power noise: white and 1/f components mixed 50/50 by power.
/// The 1/f part shapes white Gaussian spectra by `1/sqrt(f)` with DC zeroed.
pub fn unit_noise(n: usize, fs_hz: u32, rng: &mut SeededRng) -> Vec<f64> {
    let white = unit_power((0..n).map(|_| rng.gaussian()).collect());
    let n_fft = n.next_power_of_two();
    let mut spec: Vec<Complex64> = (0..n_fft)
        .map(|_| Complex64::new(rng.gaussian(), 0.0))
        .collect();
    fft_in_place(&mut spec).expect("power of two");
    let df = fs_hz as f64 / n_fft as f64;
    for (k, c) in spec.iter_mut().enumerate() {
        let kk = k.min(n_fft - k);
        *c = if kk == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            *c / (kk as f64 * df).sqrt()
        };
    }
    // inverse via conjugation; the shaping is Hermitian so the result is real
    spec.iter_mut().for_each(|c| *c = c.conj());
    fft_in_place(&mut spec).expect("power of two");
    let pink = unit_power(spec[..n].iter().map(|c| c.re).collect());
    white
        .iter()
        .zip(&pink)
        .map(|(w, p)| (w + p) * std::f64::consts::FRAC_1_SQRT_2)
        .collect()
}

struct BandSplit {
    fundamental: Vec<usize>,
    rest: Vec<usize>,
}

fn band_split(len: usize, fs_hz: u32, freq_hz: f64) -> Result<(usize, BandSplit), SynthError> {
    let (lo, hi) = ANALYSIS_BAND_HZ;
    if !(freq_hz >= lo && freq_hz <= hi) {
        return Err(SynthError::OutsideBand(freq_hz));
    }
    let n_fft = len.max(1).next_power_of_two();
    let bins = band_bins(fs_hz, n_fft, lo, hi)?;
    let center = (freq_hz * n_fft as f64 / fs_hz as f64).round() as usize;
    let (fundamental, rest): (Vec<usize>, Vec<usize>) =
        bins.partition(|&k| k + 1 >= center && k <= center + 1);
    if rest.is_empty() {
        return Err(SynthError::OutsideBand(freq_hz));
    }
    Ok((n_fft, BandSplit { fundamental, rest }))
}

/// In-band SNR estimate in dB.
///
/// With `P_F` the power in the fundamental's bin ±1 and `P_R` the power in the
/// remaining 8–16 Hz bins, the per-bin noise floor `ρ = P_R / |R|` is removed
/// from `P_F` and compared with the floor extended over the whole band:
/// `(P_F − |F|ρ) / ((|F| + |R|)ρ)`. The FFT is zero-padded to the next power of
/// two. Returns `+∞` when no noise is present, `−∞` when nothing rises above the
/// floor, and NaN for an all-zero band.
pub fn measure_band_snr(x: &[f64], fs_hz: u32, freq_hz: f64) -> Result<f64, SynthError> {
    let (n_fft, split) = band_split(x.len(), fs_hz, freq_hz)?;
    let spec = fft_real(x, n_fft)?;
    let power = |bins: &[usize]| bins.iter().map(|&k| spec[k].norm_sqr()).sum::<f64>();
    let (pf, pr) = (power(&split.fundamental), power(&split.rest));
    let (nf, nr) = (split.fundamental.len() as f64, split.rest.len() as f64);
    let floor = pr / nr;
    let signal = pf - nf * floor;
    let noise = floor * (nf + nr);
    Ok(if noise <= 1e-18 * pf {
        if pf > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        }
    } else if signal <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (signal / noise).log10()
    })
}

/// Smallest positive noise gain at which the estimator reads `target` (linear).
fn calibrate_gain(
    sig: &[Complex64],
    noise: &[Complex64],
    split: &BandSplit,
    target: f64,
) -> Option<f64> {
    let sums = |bins: &[usize]| {
        bins.iter().fold((0.0, 0.0, 0.0), |(a, b, d), &k| {
            (
                a + sig[k].norm_sqr(),
                b + (sig[k] * noise[k].conj()).re,
                d + noise[k].norm_sqr(),
            )
        })
    };
    let (af, bf, df) = sums(&split.fundamental);
    let (ar, br, dr) = sums(&split.rest);
    let (nf, nr) = (split.fundamental.len() as f64, split.rest.len() as f64);
    let gamma = nf / nr + target * (nf + nr) / nr;
    let (a2, a1, a0) = (df - gamma * dr, 2.0 * (bf - gamma * br), af - gamma * ar);
    let roots: Vec<f64> = if a2.abs() < 1e-12 * (df + gamma * dr) {
        if a1 != 0.0 {
            vec![-a0 / a1]
        } else {
            vec![]
        }
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            vec![]
        } else {
            let sq = disc.sqrt();
            vec![(-a1 - sq) / (2.0 * a2), (-a1 + sq) / (2.0 * a2)]
        }
    };
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r > 0.0)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

const CALIBRATION_ATTEMPTS: usize = 64;

/// One synthetic trial. Deterministic per `config.seed`.
pub fn generate_trial(config: &SynthConfig) -> Result<Vec<f64>, SynthError> {
    config.validate()?;
    let clean = harmonic_signal(config);
    if config.snr_db == f64::INFINITY {
        return Ok(clean);
    }
    let n = clean.len();
    let (n_fft, split) = band_split(n, config.fs_hz, config.stim_freq_hz)?;
    let mut rng = SeededRng::new(config.seed);
    let sig_spec = fft_real(&clean, n_fft)?;
    let target = 10f64.powf(config.snr_db / 10.0);
    // Some draws carry so much power near the fundamental that no gain reaches
    // the target; those are discarded and the stream continues.
    let mut fallback = None;
    for _ in 0..CALIBRATION_ATTEMPTS {
        let noise = unit_noise(n, config.fs_hz, &mut rng);
        let noise_spec = fft_real(&noise, n_fft)?;
        match calibrate_gain(&sig_spec, &noise_spec, &split, target) {
            Some(gain) => {
                return Ok(clean
                    .iter()
                    .zip(&noise)
                    .map(|(s, v)| s + gain * v)
                    .collect())
            }
            None if fallback.is_none() => {
                let gain = nominal_gain(&sig_spec, &noise_spec, &split, target);
                fallback = Some(
                    clean
                        .iter()
                        .zip(&noise)
                        .map(|(s, v)| s + gain * v)
                        .collect(),
                );
            }
            None => {}
        }
    }
    Ok(fallback.expect("at least one attempt"))
}

/// Gain making in-band noise power `1/target` of the fundamental's power.
fn nominal_gain(sig: &[Complex64], noise: &[Complex64], split: &BandSplit, target: f64) -> f64 {
    let sig_power: f64 = split.fundamental.iter().map(|&k| sig[k].norm_sqr()).sum();
    let noise_power: f64 = split
        .fundamental
        .iter()
        .chain(&split.rest)
        .map(|&k| noise[k].norm_sqr())
        .sum();
    (sig_power / (target * noise_power)).sqrt()
}

/// Noise alone, at the level a trial with this config would carry. Zeros when
/// the config is noiseless.
pub fn generate_noise(config: &SynthConfig) -> Result<Vec<f64>, SynthError> {
    config.validate()?;
    let n = config.n_samples();
    if config.snr_db == f64::INFINITY {
        return Ok(vec![0.0; n]);
    }
    let (n_fft, split) = band_split(n, config.fs_hz, config.stim_freq_hz)?;
    let mut rng = SeededRng::new(config.seed);
    let noise = unit_noise(n, config.fs_hz, &mut rng);
    let sig_spec = fft_real(&harmonic_signal(config), n_fft)?;
    let noise_spec = fft_real(&noise, n_fft)?;
    let gain = nominal_gain(
        &sig_spec,
        &noise_spec,
        &split,
        10f64.powf(config.snr_db / 10.0),
    );
    Ok(noise.iter().map(|v| gain * v).collect())
}

/// Trials cycle through `class_freqs` (trial `i` uses class `i mod n_classes`),
/// each with its own seed and a uniform random phase, concatenated into one
/// single-channel "Oz" recording.
pub fn generate_dataset(
    class_freqs: &[f64],
    trials_per_class: usize,
    template: &SynthConfig,
) -> Result<EegRecording, SynthError> {
    if class_freqs.is_empty() || trials_per_class == 0 {
        return Err(SynthError::InvalidConfig(
            "need at least one class and one trial".into(),
        ));
    }
    let n_trials = class_freqs.len() * trials_per_class;
    let len = template.n_samples();
    let mut samples = Vec::with_capacity(n_trials * len);
    let mut trials = Vec::with_capacity(n_trials);
    let mut phase_rng = SeededRng::derived(template.seed, 3);
    for i in 0..n_trials {
        let freq = class_freqs[i % class_freqs.len()];
        let cfg = SynthConfig {
            stim_freq_hz: freq,
            phase_rad: 2.0 * PI * phase_rng.next_f64(),
            seed: SeededRng::derived(template.seed, 1000 + i as u64).next_u64(),
            ..template.clone()
        };
        trials.push(TrialMarker {
            onset_sample: samples.len() as u64,
            length_samples: len as u64,
            stim_freq_hz: freq,
        });
        samples.extend(generate_trial(&cfg)?);
    }
    Ok(EegRecording::new(
        template.fs_hz,
        vec!["Oz".into()],
        samples,
        trials,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fft_magnitude;

    #[test]
    fn noiseless_trial_peaks_on_its_bin() {
        let cfg = SynthConfig::default().noiseless();
        let x = generate_trial(&cfg).unwrap();
        let mag = fft_magnitude(&x, 1024).unwrap();
        let argmax = (1..mag.len())
            .max_by(|&a, &b| mag[a].partial_cmp(&mag[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 45);
    }

    #[test]
    fn same_seed_same_trial() {
        let cfg = SynthConfig {
            seed: 77,
            ..SynthConfig::default()
        };
        assert_eq!(generate_trial(&cfg).unwrap(), generate_trial(&cfg).unwrap());
        let other = SynthConfig {
            seed: 78,
            ..cfg.clone()
        };
        assert_ne!(
            generate_trial(&cfg).unwrap(),
            generate_trial(&other).unwrap()
        );
    }

    #[test]
    fn snr_sentinels() {
        let tone = generate_trial(&SynthConfig::default().noiseless()).unwrap();
        assert_eq!(measure_band_snr(&tone, 256, 11.25).unwrap(), f64::INFINITY);
        assert!(measure_band_snr(&[0.0; 1024], 256, 11.25).unwrap().is_nan());
        assert!(matches!(
            measure_band_snr(&tone, 256, 20.0),
            Err(SynthError::OutsideBand(_))
        ));
        assert!(matches!(
            generate_trial(&SynthConfig {
                base_amp_uv: 0.0,
                ..SynthConfig::default()
            }),
            Err(SynthError::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_trial(&SynthConfig {
                snr_db: f64::NAN,
                ..SynthConfig::default()
            }),
            Err(SynthError::Unsatisfiable(_))
        ));
    }

    #[test]
    fn white_noise_reads_strongly_negative() {
        let mut rng = SeededRng::new(4);
        let x: Vec<f64> = (0..1024).map(|_| rng.gaussian()).collect();
        let snr = measure_band_snr(&x, 256, 11.25).unwrap();
        assert!(snr < -10.0, "{snr}");
    }

    #[test]
    fn generated_snr_matches_request() {
        for &snr in &[-10.0, -5.0, 0.0, 5.0, 10.0] {
            let mut sum = 0.0;
            for seed in 0..20 {
                let cfg = SynthConfig {
                    snr_db: snr,
                    seed,
                    stim_freq_hz: 9.25,
                    ..SynthConfig::default()
                };
                sum += measure_band_snr(&generate_trial(&cfg).unwrap(), 256, 9.25).unwrap();
            }
            let mean = sum / 20.0;
            assert!(
                (mean - snr).abs() <= 0.5,
                "requested {snr}, measured {mean}"
            );
        }
    }

    #[test]
    fn noiseless_energy_sits_on_fundamental() {
        let cfg = SynthConfig {
            stim_freq_hz: 13.25,
            ..SynthConfig::default()
        }
        .noiseless();
        let x = generate_trial(&cfg).unwrap();
        let spec = fft_real(&x, 1024).unwrap();
        let band: f64 = (32..=64).map(|k| spec[k].norm_sqr()).sum();
        let off: f64 = (32..=64)
            .filter(|k| !(52..=54).contains(k))
            .map(|k| spec[k].norm_sqr())
            .sum();
        assert!(off < 0.01 * band);
    }

    #[test]
    fn unit_noise_has_unit_power() {
        let mut rng = SeededRng::new(2);
        let x = unit_noise(1024, 256, &mut rng);
        let p = x.iter().map(|v| v * v).sum::<f64>() / 1024.0;
        assert!((p - 1.0).abs() < 0.1, "{p}");
    }

    #[test]
    fn dataset_layout() {
        let tpl = SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        };
        let rec = generate_dataset(&[9.25, 11.25, 13.25], 50, &tpl).unwrap();
        assert_eq!(rec.trials().len(), 150);
        assert_eq!(rec.n_samples(), 153_600);
        assert_eq!(rec.trials()[4].stim_freq_hz, 11.25);
        let rec2 =
            generate_dataset(&[9.25, 11.25, 13.25], 50, &SynthConfig { seed: 2, ..tpl }).unwrap();
        assert_eq!(rec.trials(), rec2.trials());
        assert_ne!(rec.samples(), rec2.samples());
    }

    #[test]
    fn noise_only_block_has_no_tone() {
        let cfg = SynthConfig {
            snr_db: 0.0,
            ..SynthConfig::default()
        };
        let noise = generate_noise(&cfg).unwrap();
        assert_eq!(noise.len(), 1024);
        assert!(noise.iter().any(|&v| v != 0.0));
        let quiet = generate_noise(&cfg.noiseless()).unwrap();
        assert!(quiet.iter().all(|&v| v == 0.0));
    }
}
