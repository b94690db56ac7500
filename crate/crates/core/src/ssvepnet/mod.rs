//! 1-D CNN over normalized spectral features.
//!
//! Layer stack, in order:
//!
//! ```text
//! input [L] ─ conv(8×3, valid) ─ ReLU ─ conv(8×3, valid) ─ ReLU ─ dropout(0.25)
//!           ─ max-pool(2) ─ flatten ─ dense(64) ─ ReLU ─ dense(3) ─ softmax
//! ```
//!
//! Everything is hand-written f64 loops; the network is small enough that a
//! full epoch over a few thousand examples takes well under a second.

mod model;
mod persist;
mod train;

pub use model::{softmax, Cnn, ForwardCache, Mode, Prediction};
pub use persist::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    cross_validate, evaluate, stratified_folds, train, EpochRecord, FoldResult, Metrics,
    TrainConfig, TrainOutcome,
};

use std::io;

use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("class label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("training diverged in epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("class {class} has {count} examples, fewer than the {k} folds")]
    TooFewForFolds {
        class: usize,
        count: usize,
        k: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated model file: {0}")]
    Truncated(String),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub input_len: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub pool_size: usize,
    pub hidden_units: usize,
    pub n_classes: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_len: 33,
            conv_filters: 8,
            kernel_size: 3,
            dropout_rate: 0.25,
            pool_size: 2,
            hidden_units: 64,
            n_classes: 3,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let counts = [
            ("input_len", self.input_len),
            ("conv_filters", self.conv_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("hidden_units", self.hidden_units),
            ("n_classes", self.n_classes),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(NetError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.input_len < 2 * (self.kernel_size - 1) + self.pool_size {
            return Err(NetError::InvalidConfig(format!(
                "input_len {} too short for two size-{} convolutions and a size-{} pool",
                self.input_len, self.kernel_size, self.pool_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn conv1_len(&self) -> usize {
        self.input_len + 1 - self.kernel_size
    }

    pub fn conv2_len(&self) -> usize {
        self.conv1_len() + 1 - self.kernel_size
    }

    pub fn pooled_len(&self) -> usize {
        self.conv2_len() / self.pool_size
    }

    pub fn flatten_len(&self) -> usize {
        self.pooled_len() * self.conv_filters
    }

    /// Expected tensor lengths, in the declared parameter order.
    pub fn tensor_lens(&self) -> [usize; 8] {
        let (f, k) = (self.conv_filters, self.kernel_size);
        [
            f * k,
            f,
            f * f * k,
            f,
            self.hidden_units * self.flatten_len(),
            self.hidden_units,
            self.n_classes * self.hidden_units,
            self.n_classes,
        ]
    }
}

pub const TENSOR_NAMES: [&str; 8] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense1_w", "dense1_b", "dense2_w", "dense2_b",
];

/// All weights, row-major:
/// `conv1_w[f][0][k]`, `conv2_w[g][f][k]`, `dense1_w[u][q]`, `dense2_w[c][u]`.
/// The flatten index is channel-major, `q = g * pooled_len + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub dense1_w: Vec<f64>,
    pub dense1_b: Vec<f64>,
    pub dense2_w: Vec<f64>,
    pub dense2_b: Vec<f64>,
}

impl CnnParams {
    pub fn zeros(config: &CnnConfig) -> Self {
        let l = config.tensor_lens();
        Self {
            conv1_w: vec![0.0; l[0]],
            conv1_b: vec![0.0; l[1]],
            conv2_w: vec![0.0; l[2]],
            conv2_b: vec![0.0; l[3]],
            dense1_w: vec![0.0; l[4]],
            dense1_b: vec![0.0; l[5]],
            dense2_w: vec![0.0; l[6]],
            dense2_b: vec![0.0; l[7]],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.dense2_w,
            &self.dense2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_shapes(&self, config: &CnnConfig) -> Result<(), NetError> {
        for ((name, t), want) in TENSOR_NAMES
            .iter()
            .zip(self.tensors())
            .zip(config.tensor_lens())
        {
            if t.len() != want {
                return Err(NetError::ShapeMismatch(format!(
                    "{name} has {} values, config requires {want}",
                    t.len()
                )));
            }
        }
        if let Some(name) = TENSOR_NAMES
            .iter()
            .zip(self.tensors())
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
        {
            return Err(NetError::ShapeMismatch(format!(
                "{name} holds a non-finite value"
            )));
        }
        Ok(())
    }

    /// Flat copy of all values in declared order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }
}

/// He-normal weights (`N(0, 2 / fan_in)`), zero biases. Draw order: conv1_w,
/// conv2_w, dense1_w, dense2_w, each row-major, from `SeededRng::new(seed)`.
pub fn init_params(config: &CnnConfig, seed: u64) -> Result<CnnParams, NetError> {
    config.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut p = CnnParams::zeros(config);
    let fan_ins = [
        config.kernel_size,
        config.conv_filters * config.kernel_size,
        config.flatten_len(),
        config.hidden_units,
    ];
    let weights = [
        &mut p.conv1_w,
        &mut p.conv2_w,
        &mut p.dense1_w,
        &mut p.dense2_w,
    ];
    for (w, fan_in) in weights.into_iter().zip(fan_ins) {
        let std = (2.0 / fan_in as f64).sqrt();
        for v in w.iter_mut() {
            *v = std * rng.gaussian();
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_flatten_len() {
        let c = CnnConfig::default();
        assert_eq!(c.conv1_len(), 31);
        assert_eq!(c.conv2_len(), 29);
        assert_eq!(c.pooled_len(), 14);
        assert_eq!(c.flatten_len(), 112);
        let p = init_params(&c, 0).unwrap();
        assert_eq!(p.dense1_w.len(), 64 * 112);
        assert_eq!(p.conv2_w.len(), 8 * 8 * 3);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let c = CnnConfig::default();
        let a = init_params(&c, 9).unwrap();
        assert_eq!(a, init_params(&c, 9).unwrap());
        assert_ne!(a, init_params(&c, 10).unwrap());
        for b in [&a.conv1_b, &a.conv2_b, &a.dense1_b, &a.dense2_b] {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_scale_follows_fan_in() {
        let c = CnnConfig::default();
        let p = init_params(&c, 1).unwrap();
        let var = p.dense1_w.iter().map(|v| v * v).sum::<f64>() / p.dense1_w.len() as f64;
        assert!((var - 2.0 / 112.0).abs() < 0.1 * 2.0 / 112.0, "{var}");
    }

    #[test]
    fn config_validation() {
        let mut c = CnnConfig {
            input_len: 5,
            ..CnnConfig::default()
        };
        assert!(c.validate().is_err());
        c.input_len = 6;
        assert!(c.validate().is_ok());
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let c = CnnConfig {
            hidden_units: 0,
            ..CnnConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
