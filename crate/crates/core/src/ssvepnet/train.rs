use super::{init_params, Cnn, CnnConfig, CnnParams, NetError};
use crate::eegio::{indices_by_class, LabeledExample};
use crate::rng::SeededRng;

/// Optimizer and schedule. Defaults: Adam(0.9, 0.999, 1e-8), lr 1e-3, batch 32, 50 epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidTrainConfig(format!(
                "learning rate {} must be a non-negative number",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NetError::InvalidTrainConfig(
                "batch size and epochs must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return Err(NetError::InvalidTrainConfig(
                "bad Adam hyperparameters".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mean_cross_entropy: f64,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// One row of the training history; metrics are eval-mode, after the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{:.6},{},{}",
            self.epoch,
            self.train_loss,
            self.train_acc,
            opt(self.val_loss),
            opt(self.val_acc)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Cnn,
    pub history: Vec<EpochRecord>,
}

pub fn evaluate(model: &Cnn, dataset: &[LabeledExample]) -> Result<Metrics, NetError> {
    if dataset.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let n = model.config.n_classes;
    let mut confusion = vec![vec![0usize; n]; n];
    let mut loss = 0.0;
    for ex in dataset {
        if ex.class_index >= n {
            return Err(NetError::LabelOutOfRange {
                label: ex.class_index,
                n_classes: n,
            });
        }
        let pred = model.predict(&ex.features.values)?;
        loss += -pred.probs[ex.class_index].max(f64::MIN_POSITIVE).ln();
        confusion[ex.class_index][pred.class_index] += 1;
    }
    let correct: usize = (0..n).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        accuracy: correct as f64 / dataset.len() as f64,
        confusion,
        mean_cross_entropy: loss / dataset.len() as f64,
    })
}

struct Adam {
    m: CnnParams,
    v: CnnParams,
    step: i32,
}

impl Adam {
    fn new(config: &CnnConfig) -> Self {
        Self {
            m: CnnParams::zeros(config),
            v: CnnParams::zeros(config),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut CnnParams, grads: &CnnParams, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Mini-batch Adam over reshuffled epochs.
///
/// Initial weights come from `init_params(net, seed)`; shuffling and dropout
/// draw from a second stream derived from the same seed, so the outcome is a
/// pure function of `(data order, configs)`.
pub fn train(
    train_set: &[LabeledExample],
    val_set: Option<&[LabeledExample]>,
    config: &TrainConfig,
    net: &CnnConfig,
) -> Result<TrainOutcome, NetError> {
    if train_set.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    config.validate()?;
    let mut model = Cnn::new(*net, init_params(net, config.seed)?)?;
    for ex in train_set.iter().chain(val_set.unwrap_or(&[])) {
        if ex.features.len() != net.input_len {
            return Err(NetError::ShapeMismatch(format!(
                "example has {} features, network expects {}",
                ex.features.len(),
                net.input_len
            )));
        }
        if ex.class_index >= net.n_classes {
            return Err(NetError::LabelOutOfRange {
                label: ex.class_index,
                n_classes: net.n_classes,
            });
        }
    }

    let mut rng = SeededRng::derived(config.seed, 1);
    let mut adam = Adam::new(net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let masks: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| model.draw_dropout_mask(&mut rng))
                .collect();
            let (loss, grads) = batch_loss_and_grads(&model, &batch, masks);
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            adam.update(&mut model.params, &grads, config);
        }
        let tr = evaluate(&model, train_set)?;
        if !tr.mean_cross_entropy.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        let va = val_set.map(|v| evaluate(&model, v)).transpose()?;
        history.push(EpochRecord {
            epoch,
            train_loss: tr.mean_cross_entropy,
            train_acc: tr.accuracy,
            val_loss: va.as_ref().map(|m| m.mean_cross_entropy),
            val_acc: va.as_ref().map(|m| m.accuracy),
        });
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(not(feature = "parallel"))]
fn batch_loss_and_grads(
    model: &Cnn,
    batch: &[&LabeledExample],
    masks: Vec<Vec<f64>>,
) -> (f64, CnnParams) {
    model.loss_and_grads_masked(batch, masks)
}

/// Per-example gradients in parallel, summed in batch order so the result
/// matches the serial path bit for bit.
#[cfg(feature = "parallel")]
fn batch_loss_and_grads(
    model: &Cnn,
    batch: &[&LabeledExample],
    masks: Vec<Vec<f64>>,
) -> (f64, CnnParams) {
    use rayon::prelude::*;
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, CnnParams)> = batch
        .par_iter()
        .zip(masks.into_par_iter())
        .map(|(ex, mask)| model.example_loss_and_grads(ex, mask, scale))
        .collect();
    model.sum_parts(parts, scale)
}

/// Stratified fold index for every example. Each class is shuffled, then its
/// members are dealt round-robin, continuing the deal across classes so fold
/// sizes differ by at most one.
pub fn stratified_folds(
    examples: &[LabeledExample],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, NetError> {
    if examples.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if k < 2 {
        return Err(NetError::InvalidTrainConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let by_class = indices_by_class(examples);
    for (class, idx) in by_class.iter().enumerate() {
        if !idx.is_empty() && idx.len() < k {
            return Err(NetError::TooFewForFolds {
                class,
                count: idx.len(),
                k,
            });
        }
    }
    let mut rng = SeededRng::derived(seed, 2);
    let mut fold_of = vec![0; examples.len()];
    let mut deal = 0;
    for idx in by_class {
        let mut shuffled = idx;
        rng.shuffle(&mut shuffled);
        for i in shuffled {
            fold_of[i] = deal % k;
            deal += 1;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub train: Metrics,
    pub val: Metrics,
    pub history: Vec<EpochRecord>,
}

/// k-fold cross-validation; fold `i` validates on part `i` with a freshly
/// initialized network (seed `seed + i`).
pub fn cross_validate(
    train_set: &[LabeledExample],
    k: usize,
    config: &TrainConfig,
    net: &CnnConfig,
) -> Result<Vec<FoldResult>, NetError> {
    let fold_of = stratified_folds(train_set, k, config.seed)?;
    let mut results = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (ex, &f) in train_set.iter().zip(&fold_of) {
            if f == fold {
                va.push(ex.clone());
            } else {
                tr.push(ex.clone());
            }
        }
        let fold_cfg = TrainConfig {
            seed: config.seed.wrapping_add(fold as u64),
            ..*config
        };
        let outcome = train(&tr, Some(&va), &fold_cfg, net)?;
        results.push(FoldResult {
            fold,
            train: evaluate(&outcome.model, &tr)?,
            val: evaluate(&outcome.model, &va)?,
            history: outcome.history,
        });
    }
    Ok(results)
}
