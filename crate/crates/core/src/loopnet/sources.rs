//! Where the "live" EEG comes from during a stimulus window.

use std::f64::consts::PI;

use thiserror::Error;

use crate::eegio::EegRecording;
use crate::mazebot::{BfsOperator, JunctionInfo, Maze, Operator, Pose};
use crate::rng::SeededRng;
use crate::synth::{generate_noise, generate_trial, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("recording exhausted after {served} trials")]
    Exhausted { served: usize },
    #[error("trial {trial} has {len} samples, {needed} needed")]
    TrialTooShort {
        trial: usize,
        len: usize,
        needed: usize,
    },
    #[error("recording is sampled at {found} Hz, pipeline expects {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("robot pose unknown; cannot derive operator intent")]
    PoseUnknown,
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Everything a source may use to produce one window of signal.
#[derive(Debug, Clone, Copy)]
pub struct AcquireRequest<'a> {
    pub junction_id: u32,
    pub open_mask: u8,
    pub pose: Option<Pose>,
    pub maze: Option<&'a Maze>,
    pub n_samples: usize,
    pub fs_hz: u32,
}

pub trait SignalSource: Send {
    fn acquire(&mut self, req: &AcquireRequest<'_>) -> Result<Vec<f64>, SourceError>;

    /// Operator selection from the console; ignored by sources that do not use it.
    fn select(&mut self, _target: Option<u8>) {}

    fn selected(&self) -> Option<u8> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// The class the console operator is looking at; noise only when nothing is selected.
    Console,
    /// The command a shortest-path operator would give at the robot's pose.
    Oracle,
}

/// Synthesizes the SSVEP response to the attended target.
#[derive(Debug, Clone)]
pub struct SynthSource {
    template: SynthConfig,
    class_freqs: Vec<f64>,
    selector: Selector,
    selected: Option<u8>,
}

impl SynthSource {
    pub fn new(template: SynthConfig, class_freqs: Vec<f64>, selector: Selector) -> Self {
        Self {
            template,
            class_freqs,
            selector,
            selected: None,
        }
    }

    fn target_class(&self, req: &AcquireRequest<'_>) -> Result<Option<usize>, SourceError> {
        match self.selector {
            Selector::Console => Ok(self.selected.map(usize::from)),
            Selector::Oracle => {
                let (Some(maze), Some(pose)) = (req.maze, req.pose) else {
                    return Err(SourceError::PoseUnknown);
                };
                let info = JunctionInfo {
                    junction_id: req.junction_id,
                    pose,
                    open_mask: req.open_mask,
                };
                Ok(Some(BfsOperator.decide(maze, &info).index() as usize))
            }
        }
    }
}

impl SignalSource for SynthSource {
    fn acquire(&mut self, req: &AcquireRequest<'_>) -> Result<Vec<f64>, SourceError> {
        let mut rng = SeededRng::derived(self.template.seed, req.junction_id as u64);
        let mut cfg = SynthConfig {
            fs_hz: req.fs_hz,
            duration_s: req.n_samples as f64 / req.fs_hz as f64,
            phase_rad: 2.0 * PI * rng.next_f64(),
            seed: rng.next_u64(),
            ..self.template.clone()
        };
        match self.target_class(req)? {
            Some(class) => {
                cfg.stim_freq_hz = self.class_freqs[class];
                Ok(generate_trial(&cfg)?)
            }
            None => Ok(generate_noise(&cfg)?),
        }
    }

    fn select(&mut self, target: Option<u8>) {
        self.selected = target.filter(|&t| (t as usize) < self.class_freqs.len());
    }

    fn selected(&self) -> Option<u8> {
        self.selected
    }
}

/// Serves successive trials of a recording, one per stimulus window.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    recording: EegRecording,
    channel: usize,
    next_trial: usize,
}

impl ReplaySource {
    pub fn new(recording: EegRecording, channel: usize) -> Self {
        Self {
            recording,
            channel,
            next_trial: 0,
        }
    }
}

impl SignalSource for ReplaySource {
    fn acquire(&mut self, req: &AcquireRequest<'_>) -> Result<Vec<f64>, SourceError> {
        if self.recording.fs_hz() != req.fs_hz {
            return Err(SourceError::SampleRateMismatch {
                expected: req.fs_hz,
                found: self.recording.fs_hz(),
            });
        }
        let trial =
            *self
                .recording
                .trials()
                .get(self.next_trial)
                .ok_or(SourceError::Exhausted {
                    served: self.next_trial,
                })?;
        let index = self.next_trial;
        self.next_trial += 1;
        let x = self.recording.trial_signal(self.channel, &trial);
        if x.len() < req.n_samples {
            return Err(SourceError::TrialTooShort {
                trial: index,
                len: x.len(),
                needed: req.n_samples,
            });
        }
        Ok(x[..req.n_samples].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eegio::TrialMarker;
    use crate::mazebot::{generate_maze, Cell, Heading};

    fn req(n: usize) -> AcquireRequest<'static> {
        AcquireRequest {
            junction_id: 1,
            open_mask: 7,
            pose: None,
            maze: None,
            n_samples: n,
            fs_hz: 256,
        }
    }

    #[test]
    fn console_selection_drives_frequency() {
        let mut s = SynthSource::new(
            SynthConfig::default().noiseless(),
            vec![9.25, 11.25, 13.25],
            Selector::Console,
        );
        assert!(s.acquire(&req(1024)).unwrap().iter().all(|v| *v == 0.0));
        s.select(Some(2));
        assert_eq!(s.selected(), Some(2));
        let x = s.acquire(&req(1024)).unwrap();
        let spec = crate::dsp::fft_magnitude(&x, 1024).unwrap();
        let peak = (32..=64)
            .max_by(|&a, &b| spec[a].total_cmp(&spec[b]))
            .unwrap();
        assert_eq!(peak, 53);
        s.select(Some(9));
        assert_eq!(s.selected(), None);
    }

    #[test]
    fn oracle_needs_pose() {
        let mut s = SynthSource::new(
            SynthConfig::default(),
            vec![9.25, 11.25, 13.25],
            Selector::Oracle,
        );
        assert!(matches!(
            s.acquire(&req(768)),
            Err(SourceError::PoseUnknown)
        ));
        let m = generate_maze(4, 4, 1).unwrap();
        let r = AcquireRequest {
            maze: Some(&m),
            pose: Some(Pose {
                cell: Cell::new(0, 0),
                heading: Heading::E,
            }),
            ..req(768)
        };
        assert_eq!(s.acquire(&r).unwrap().len(), 768);
    }

    #[test]
    fn replay_serves_trials_in_order_then_exhausts() {
        let samples: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let trials = (0..3)
            .map(|t| TrialMarker {
                onset_sample: 10 * t,
                length_samples: 10,
                stim_freq_hz: 9.25,
            })
            .collect();
        let rec = EegRecording::new(256, vec!["Oz".into()], samples, trials).unwrap();
        let mut s = ReplaySource::new(rec, 0);
        assert_eq!(s.acquire(&req(4)).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.acquire(&req(10)).unwrap()[0], 10.0);
        assert!(matches!(
            s.acquire(&req(11)),
            Err(SourceError::TrialTooShort { trial: 2, .. })
        ));
        assert!(matches!(
            s.acquire(&req(4)),
            Err(SourceError::Exhausted { served: 3 })
        ));
    }

    #[test]
    fn empty_recording_fails_first_acquire() {
        let rec = EegRecording::new(256, vec!["Oz".into()], vec![], vec![]).unwrap();
        assert!(matches!(
            ReplaySource::new(rec, 0).acquire(&req(4)),
            Err(SourceError::Exhausted { served: 0 })
        ));
    }
}
