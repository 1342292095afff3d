use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{crop_features, FeatureConfig};
use crate::error::{invalid, Result};
use crate::imaging::Image;
use crate::label::LightCombination;
use crate::seed::{self, stream};
use crate::synth::LabeledCrop;

/// Linear softmax classifier over a fixed class list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub version: u32,
    pub classes: Vec<LightCombination>,
    pub features: FeatureConfig,
    /// One row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Parameter gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A feature vector with its label; `id` fixes the canonical order used
/// before shuffling.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: LightCombination,
}

impl SoftmaxModel {
    pub const VERSION: u32 = 1;

    /// All-zero model.
    pub fn zeros(classes: Vec<LightCombination>, features: FeatureConfig) -> Result<Self> {
        features.validate()?;
        if classes.len() < 2 {
            return Err(invalid!("a classifier needs at least two classes"));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(invalid!("class {c} listed twice"));
            }
        }
        let d = features.len();
        Ok(Self { version: Self::VERSION, weights: vec![vec![0.0; d]; classes.len()], bias: vec![0.0; classes.len()], classes, features })
    }

    /// Zero model over the ten light combinations in canonical order.
    pub fn standard() -> Self {
        Self::zeros(LightCombination::ALL.to_vec(), FeatureConfig::default()).expect("default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        let d = self.features.len();
        if self.version != Self::VERSION {
            return Err(invalid!("unsupported model version {}", self.version));
        }
        if self.weights.len() != self.classes.len() || self.bias.len() != self.classes.len() || self.weights.iter().any(|r| r.len() != d) {
            return Err(invalid!("model parameter shapes do not match {} classes × {d} features", self.classes.len()));
        }
        if self.weights.iter().flatten().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(invalid!("model parameters must be finite"));
        }
        Ok(())
    }

    /// Start point for fine-tuning on a new class list: shared classes keep
    /// their learned rows, new ones start at zero.
    pub fn warm_start(&self, classes: Vec<LightCombination>) -> Result<Self> {
        self.validate()?;
        let mut m = Self::zeros(classes, self.features)?;
        for (i, c) in m.classes.iter().enumerate() {
            if let Ok(j) = self.class_index(*c) {
                m.weights[i].clone_from(&self.weights[j]);
                m.bias[i] = self.bias[j];
            }
        }
        Ok(m)
    }

    pub fn class_index(&self, c: LightCombination) -> Result<usize> {
        self.classes.iter().position(|&k| k == c).ok_or_else(|| invalid!("class {c} is not in the model"))
    }

    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.features.len() {
            return Err(invalid!("feature length {} does not match model ({})", f.len(), self.features.len()));
        }
        Ok(self.weights.iter().zip(&self.bias).map(|(row, b)| row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + b).collect())
    }

    /// Class probabilities, `softmax(W·f + b)`.
    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(f)?))
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// First index of the largest entry.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `l2/2·‖W‖²` (bias not penalised) and its
/// gradient.
pub fn loss_and_gradient(model: &SoftmaxModel, batch: &[Example], l2: f64) -> Result<(f64, Gradients)> {
    let refs: Vec<&Example> = batch.iter().collect();
    loss_and_gradient_refs(model, &refs, l2)
}

fn loss_and_gradient_refs(model: &SoftmaxModel, batch: &[&Example], l2: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(invalid!("empty batch"));
    }
    let (k, d) = (model.classes.len(), model.features.len());
    let mut gw = vec![vec![0.0; d]; k];
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let y = model.class_index(ex.label)?;
        let z = model.logits(&ex.features)?;
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(z.iter().map(|v| libm::exp(v - m)).sum::<f64>());
        loss += lse - z[y];
        for c in 0..k {
            let delta = (libm::exp(z[c] - lse) - if c == y { 1.0 } else { 0.0 }) * scale;
            gb[c] += delta;
            for (g, x) in gw[c].iter_mut().zip(&ex.features) {
                *g += delta * x;
            }
        }
    }
    let mut reg = 0.0;
    for (grow, wrow) in gw.iter_mut().zip(&model.weights) {
        for (g, w) in grow.iter_mut().zip(wrow) {
            *g += l2 * w;
            reg += w * w;
        }
    }
    Ok((loss * scale + 0.5 * l2 * reg, Gradients { weights: gw, bias: gb }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgdm { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn sgdm() -> Self {
        Optimizer::Sgdm { lr: 0.05, momentum: 0.9 }
    }

    pub fn adam() -> Self {
        Optimizer::Adam { lr: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::Sgdm { lr, momentum } => {
                if !(lr > 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&momentum) {
                    return Err(invalid!("SGDM needs lr > 0 and momentum in [0, 1)"));
                }
            }
            Optimizer::Adam { lr, beta1, beta2, epsilon } => {
                let open = |b: f64| b > 0.0 && b < 1.0;
                if !(lr > 0.0 && lr.is_finite()) || !open(beta1) || !open(beta2) || !(epsilon > 0.0) {
                    return Err(invalid!("Adam needs lr > 0, betas in (0, 1) and epsilon > 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

// Histogram features are small fractions, so the weights need to be large;
// at l2 = 1e-4 the penalty made up half the final loss.
impl Default for TrainConfig {
    fn default() -> Self {
        Self { optimizer: Optimizer::sgdm(), epochs: 150, batch_size: 64, seed: 0, l2: 1e-5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid!("epochs and batch size must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(invalid!("l2 must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Optimiser state over the flattened parameter vector (weights row-major,
/// then bias).
struct State {
    opt: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl State {
    fn new(opt: Optimizer, n: usize) -> Self {
        Self { opt, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, model: &mut SoftmaxModel, g: &Gradients) {
        self.t += 1;
        let params = model.weights.iter_mut().flatten().chain(model.bias.iter_mut());
        let grads = g.weights.iter().flatten().chain(&g.bias);
        match self.opt {
            Optimizer::Sgdm { lr, momentum } => {
                for ((p, g), v) in params.zip(grads).zip(&mut self.m) {
                    *v = momentum * *v - lr * g;
                    *p += *v;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, epsilon } => {
                let c1 = 1.0 - libm::pow(beta1, self.t as f64);
                let c2 = 1.0 - libm::pow(beta2, self.t as f64);
                for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + epsilon);
                }
            }
        }
    }
}

/// Fraction of examples whose argmax class matches the label.
pub(crate) fn accuracy(model: &SoftmaxModel, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for ex in data {
        if model.classes[argmax(&model.logits(&ex.features)?)] == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Trains a zero-initialised model over `classes`.
pub fn train(
    train: &[Example],
    val: &[Example],
    classes: &[LightCombination],
    features: FeatureConfig,
    cfg: &TrainConfig,
) -> Result<(SoftmaxModel, Vec<EpochStats>)> {
    let model = SoftmaxModel::zeros(classes.to_vec(), features)?;
    train_from(model, train, val, cfg)
}

/// Minibatch training from `init`. Examples are put in `id` order, then
/// shuffled each epoch by a permutation that depends only on the seed and
/// the epoch number.
pub fn train_from(init: SoftmaxModel, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<(SoftmaxModel, Vec<EpochStats>)> {
    cfg.validate()?;
    init.validate()?;
    for &c in &init.classes {
        if !train.iter().any(|e| e.label == c) {
            return Err(invalid!("training split has no example of class {c}"));
        }
    }
    for e in train.iter().chain(val) {
        init.class_index(e.label)?;
        if e.features.len() != init.features.len() {
            return Err(invalid!("example {} has {} features, model expects {}", e.id, e.features.len(), init.features.len()));
        }
    }
    let mut data: Vec<&Example> = train.iter().collect();
    data.sort_by_key(|e| e.id);
    let mut model = init;
    let n_params = model.classes.len() * (model.features.len() + 1);
    let mut state = State::new(cfg.optimizer, n_params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order = data.clone();
        order.shuffle(&mut seed::rng(cfg.seed, stream::SHUFFLE, epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let (_, g) = loss_and_gradient_refs(&model, chunk, cfg.l2)?;
            state.step(&mut model, &g);
        }
        let (train_loss, _) = loss_and_gradient_refs(&model, &data, cfg.l2)?;
        if !train_loss.is_finite() {
            return Err(invalid!("training diverged at epoch {}", epoch + 1));
        }
        history.push(EpochStats { epoch: epoch + 1, train_loss, val_acc: accuracy(&model, val)? });
    }
    Ok((model, history))
}

/// Prepares and featurises crops; example ids are the crop ids.
pub fn featurize(crops: &[LabeledCrop], cfg: &FeatureConfig) -> Result<Vec<Example>> {
    crops
        .iter()
        .map(|c| {
            let features = crop_features(&c.image, cfg).map_err(|e| invalid!("crop {}: {e}", c.id))?;
            Ok(Example { id: c.id, features, label: c.label })
        })
        .collect()
}

/// Label and class scores for a raw crop; ties go to the earlier class.
pub fn predict(model: &SoftmaxModel, crop: &Image) -> Result<(LightCombination, Vec<f64>)> {
    let f = crop_features(crop, &model.features)?;
    let p = model.forward(&f)?;
    Ok((model.classes[argmax(&p)], p))
}
