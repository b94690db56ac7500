use super::{CnnConfig, CnnParams, NetError};
use crate::eegio::LabeledExample;
use crate::rng::SeededRng;

/// Whether dropout is active.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-p)); empty when dropout is off.
    mask: Vec<f64>,
    pool_argmax: Vec<usize>,
    flat: Vec<f64>,
    z3: Vec<f64>,
    a3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.probs[self.class_index]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

/// Lowest index among the maxima.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub config: CnnConfig,
    pub params: CnnParams,
}

impl Cnn {
    pub fn new(config: CnnConfig, params: CnnParams) -> Result<Self, NetError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.config.input_len {
            return Err(NetError::ShapeMismatch(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.config.input_len
            )));
        }
        Ok(())
    }

    /// Draws one example's dropout multipliers over the conv2 output.
    pub fn draw_dropout_mask(&self, rng: &mut SeededRng) -> Vec<f64> {
        let p = self.config.dropout_rate;
        if p == 0.0 {
            return Vec::new();
        }
        let keep_scale = 1.0 / (1.0 - p);
        (0..self.config.conv_filters * self.config.conv2_len())
            .map(|_| if rng.next_f64() < p { 0.0 } else { keep_scale })
            .collect()
    }

    pub fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<(Vec<f64>, ForwardCache), NetError> {
        self.check_input(x)?;
        let mask = match mode {
            Mode::Eval => Vec::new(),
            Mode::Train(rng) => self.draw_dropout_mask(rng),
        };
        Ok(self.forward_masked(x, mask))
    }

    /// Forward pass with a fixed dropout mask (empty = no dropout).
    pub(crate) fn forward_masked(&self, x: &[f64], mask: Vec<f64>) -> (Vec<f64>, ForwardCache) {
        let c = &self.config;
        let p = &self.params;
        let (nf, k) = (c.conv_filters, c.kernel_size);
        let (l1, l2, l3) = (c.conv1_len(), c.conv2_len(), c.pooled_len());

        let mut z1 = vec![0.0; nf * l1];
        for f in 0..nf {
            let w = &p.conv1_w[f * k..(f + 1) * k];
            for i in 0..l1 {
                let mut acc = p.conv1_b[f];
                for t in 0..k {
                    acc += w[t] * x[i + t];
                }
                z1[f * l1 + i] = acc;
            }
        }
        let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();

        let mut z2 = vec![0.0; nf * l2];
        for g in 0..nf {
            for i in 0..l2 {
                let mut acc = p.conv2_b[g];
                for f in 0..nf {
                    let w = &p.conv2_w[(g * nf + f) * k..(g * nf + f + 1) * k];
                    let a = &a1[f * l1 + i..f * l1 + i + k];
                    for t in 0..k {
                        acc += w[t] * a[t];
                    }
                }
                z2[g * l2 + i] = acc;
            }
        }
        let mut dropped: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        if !mask.is_empty() {
            for (d, m) in dropped.iter_mut().zip(&mask) {
                *d *= m;
            }
        }

        let ps = c.pool_size;
        let mut flat = vec![0.0; nf * l3];
        let mut pool_argmax = vec![0; nf * l3];
        for g in 0..nf {
            for j in 0..l3 {
                let base = g * l2 + j * ps;
                let mut best = base;
                for t in 1..ps {
                    if dropped[base + t] > dropped[best] {
                        best = base + t;
                    }
                }
                flat[g * l3 + j] = dropped[best];
                pool_argmax[g * l3 + j] = best;
            }
        }

        let q = flat.len();
        let mut z3 = vec![0.0; c.hidden_units];
        for (u, z) in z3.iter_mut().enumerate() {
            let row = &p.dense1_w[u * q..(u + 1) * q];
            *z = p.dense1_b[u] + row.iter().zip(&flat).map(|(w, h)| w * h).sum::<f64>();
        }
        let a3: Vec<f64> = z3.iter().map(|&v| v.max(0.0)).collect();

        let h = c.hidden_units;
        let logits: Vec<f64> = (0..c.n_classes)
            .map(|cl| {
                let row = &p.dense2_w[cl * h..(cl + 1) * h];
                p.dense2_b[cl] + row.iter().zip(&a3).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();

        let cache = ForwardCache {
            input: x.to_vec(),
            z1,
            a1,
            z2,
            mask,
            pool_argmax,
            flat,
            z3,
            a3,
        };
        (logits, cache)
    }

    /// Accumulates `scale · ∂loss/∂θ` into `grads`, given `∂loss/∂logits`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        scale: f64,
        grads: &mut CnnParams,
    ) {
        let c = &self.config;
        let p = &self.params;
        let (nf, k, h) = (c.conv_filters, c.kernel_size, c.hidden_units);
        let (l1, l2) = (c.conv1_len(), c.conv2_len());
        let q = cache.flat.len();

        let mut da3 = vec![0.0; h];
        for (cl, &dl) in dlogits.iter().enumerate() {
            let dl = dl * scale;
            grads.dense2_b[cl] += dl;
            let row = &p.dense2_w[cl * h..(cl + 1) * h];
            let grow = &mut grads.dense2_w[cl * h..(cl + 1) * h];
            for u in 0..h {
                grow[u] += dl * cache.a3[u];
                da3[u] += row[u] * dl;
            }
        }

        let mut dflat = vec![0.0; q];
        for (u, &dz) in da3.iter().enumerate() {
            if cache.z3[u] <= 0.0 {
                continue;
            }
            grads.dense1_b[u] += dz;
            let row = &p.dense1_w[u * q..(u + 1) * q];
            let grow = &mut grads.dense1_w[u * q..(u + 1) * q];
            for j in 0..q {
                grow[j] += dz * cache.flat[j];
                dflat[j] += row[j] * dz;
            }
        }

        let mut dz2 = vec![0.0; nf * l2];
        for (j, &src) in cache.pool_argmax.iter().enumerate() {
            dz2[src] += dflat[j];
        }
        for (i, d) in dz2.iter_mut().enumerate() {
            if cache.z2[i] <= 0.0 {
                *d = 0.0;
            } else if !cache.mask.is_empty() {
                *d *= cache.mask[i];
            }
        }

        let mut da1 = vec![0.0; nf * l1];
        for g in 0..nf {
            for i in 0..l2 {
                let d = dz2[g * l2 + i];
                if d == 0.0 {
                    continue;
                }
                grads.conv2_b[g] += d;
                for f in 0..nf {
                    let widx = (g * nf + f) * k;
                    for t in 0..k {
                        grads.conv2_w[widx + t] += d * cache.a1[f * l1 + i + t];
                        da1[f * l1 + i + t] += p.conv2_w[widx + t] * d;
                    }
                }
            }
        }

        for f in 0..nf {
            for i in 0..l1 {
                if cache.z1[f * l1 + i] <= 0.0 {
                    continue;
                }
                let d = da1[f * l1 + i];
                grads.conv1_b[f] += d;
                for t in 0..k {
                    grads.conv1_w[f * k + t] += d * cache.input[i + t];
                }
            }
        }
    }

    /// Eval-mode class probabilities and argmax (ties to the lowest index).
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, NetError> {
        let (logits, _) = self.forward(x, Mode::Eval)?;
        let probs = softmax(&logits);
        Ok(Prediction {
            class_index: argmax(&logits),
            probs,
        })
    }

    /// Like [`Cnn::predict`], but only classes with `allowed[c]` compete for the argmax.
    /// Probabilities stay those of the unmasked softmax. Falls back to the
    /// unmasked argmax when nothing is allowed.
    pub fn predict_masked(&self, x: &[f64], allowed: &[bool]) -> Result<Prediction, NetError> {
        let (logits, _) = self.forward(x, Mode::Eval)?;
        let probs = softmax(&logits);
        let masked: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(c, &l)| {
                if allowed.get(c).copied().unwrap_or(false) {
                    l
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let class_index = if masked.iter().all(|v| *v == f64::NEG_INFINITY) {
            argmax(&logits)
        } else {
            argmax(&masked)
        };
        Ok(Prediction { class_index, probs })
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient, with
    /// dropout masks sampled from `rng` in train mode and then held fixed.
    pub fn loss_and_grads(
        &self,
        batch: &[&LabeledExample],
        mut mode: Mode<'_>,
    ) -> Result<(f64, CnnParams), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let mut masks = Vec::with_capacity(batch.len());
        for ex in batch {
            self.check_input(&ex.features.values)?;
            if ex.class_index >= self.config.n_classes {
                return Err(NetError::LabelOutOfRange {
                    label: ex.class_index,
                    n_classes: self.config.n_classes,
                });
            }
            masks.push(match &mut mode {
                Mode::Eval => Vec::new(),
                Mode::Train(rng) => self.draw_dropout_mask(rng),
            });
        }
        Ok(self.loss_and_grads_masked(batch, masks))
    }

    pub(crate) fn loss_and_grads_masked(
        &self,
        batch: &[&LabeledExample],
        masks: Vec<Vec<f64>>,
    ) -> (f64, CnnParams) {
        let scale = 1.0 / batch.len() as f64;
        let parts = batch
            .iter()
            .zip(masks)
            .map(|(ex, mask)| self.example_loss_and_grads(ex, mask, scale));
        self.sum_parts(parts, scale)
    }

    /// One example's loss and its gradient pre-multiplied by `scale`.
    pub(crate) fn example_loss_and_grads(
        &self,
        ex: &LabeledExample,
        mask: Vec<f64>,
        scale: f64,
    ) -> (f64, CnnParams) {
        let mut grads = CnnParams::zeros(&self.config);
        let (logits, cache) = self.forward_masked(&ex.features.values, mask);
        let loss = log_sum_exp(&logits) - logits[ex.class_index];
        let mut dl = softmax(&logits);
        dl[ex.class_index] -= 1.0;
        self.backward(&cache, &dl, scale, &mut grads);
        (loss, grads)
    }

    /// Sums per-example parts in order. Serial and parallel training share
    /// this, so both give bitwise-identical batches.
    pub(crate) fn sum_parts(
        &self,
        parts: impl IntoIterator<Item = (f64, CnnParams)>,
        scale: f64,
    ) -> (f64, CnnParams) {
        let mut total = CnnParams::zeros(&self.config);
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (t, s) in total.tensors_mut().into_iter().zip(g.tensors()) {
                for (a, b) in t.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
        (loss * scale, total)
    }

    /// Per-example loss in eval mode.
    pub fn example_loss(&self, ex: &LabeledExample) -> Result<f64, NetError> {
        let (logits, _) = self.forward(&ex.features.values, Mode::Eval)?;
        Ok(log_sum_exp(&logits) - logits[ex.class_index])
    }
}
