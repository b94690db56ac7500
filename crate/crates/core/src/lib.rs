//! Human-guided SSVEP maze robot: EEG feature pipeline, a small 1-D CNN
//! classifier, a grid-maze robot state machine and the closed-loop command
//! service that ties them together.
//!
//! * [`eegio`] — recording files, trial labels, stratified splits
//! * [`dsp`] — band-pass, windowing, FFT, normalized band features
//! * [`ssvepnet`] — CNN forward/backward, Adam training, k-fold CV, model files
//! * [`synth`] — seeded synthetic SSVEP trials
//! * [`mazebot`] — mazes, sensors, navigation state machine, BFS operator
//! * [`loopnet`] — wire protocol, command service, robot client, status stream

pub mod dsp;
pub mod eegio;
pub mod loopnet;
pub mod mazebot;
pub mod rng;
pub mod ssvepnet;
pub mod synth;
