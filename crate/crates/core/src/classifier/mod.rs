//! Trainable binary head over concatenated LGA/LVP feature maps.

mod adam;
pub mod checkpoint;
mod model;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_scalar, adam_step, AdamHyper, AdamState};
pub use model::{
    backward, bce_loss, forward, global_average_pool, sigmoid, Architecture, ForwardCache,
    Gradients, ModelParams, ParamGroup, Volume, DEFAULT_WIDTHS, KERNEL, PROB_CLAMP, STRIDE,
};

use crate::error::{Error, Result};
use crate::lga::LgaFeature;
use crate::lvp::LvpFeature;
use crate::tensor::Tensor;

/// Channel-wise concatenation of an LGA map and a rescaled LVP map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack(Tensor);

impl FeatureStack {
    pub fn new(t: Tensor) -> Self {
        Self(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Channels `[0, C)` hold LGA, `[C, 2C)` hold LVP divided by its largest code.
pub fn concat_features(lga: &LgaFeature, lvp: &LvpFeature) -> Result<FeatureStack> {
    if lga.map.shape() != lvp.map.shape() {
        return Err(Error::Dimension(format!(
            "LGA {:?} and LVP {:?} shapes differ",
            lga.map.shape(),
            lvp.map.shape()
        )));
    }
    let scale = lvp.weights.max_code();
    Ok(FeatureStack(lga.map.concat_channels(&lvp.map.map(|v| v / scale))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0002,
            batch_size: 32,
            epochs: 40,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's minibatches.
    pub loss: f64,
    /// Training-set accuracy with the parameters at the end of the epoch.
    pub acc: f64,
}

/// `label = probability > threshold`, so an exact tie is labelled real.
pub fn predict(params: &ModelParams, x: &FeatureStack, threshold: f64) -> Result<(bool, f64)> {
    let (p, _) = forward(params, x)?;
    Ok((p > threshold, p))
}

/// Probabilities for many stacks, in input order.
pub fn predict_all(params: &ModelParams, xs: &[&FeatureStack]) -> Result<Vec<f64>> {
    xs.par_iter()
        .map(|x| forward(params, x).map(|(p, _)| p))
        .collect()
}

/// Pairwise sum in index order, independent of how the leaves were computed.
fn tree_reduce(mut items: Vec<Gradients>) -> Option<Gradients> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.add_assign(&b);
            }
            next.push(a);
        }
        items = next;
    }
    items.pop()
}

pub fn init_params(arch: Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::glorot(arch, &mut rng)
}

/// Minibatch Adam on BCE. Initialization and shuffling are both seeded by `cfg.seed`.
pub fn train(
    samples: &[(FeatureStack, bool)],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    train_with_state(samples, cfg).map(|(p, _, h)| (p, h))
}

/// Like [`train`], also returning the final optimizer state.
pub fn train_with_state(
    samples: &[(FeatureStack, bool)],
    cfg: &TrainConfig,
) -> Result<(ModelParams, AdamState, Vec<EpochStats>)> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::Domain("training needs at least two samples".into()));
    }
    let positives = samples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::Domain(format!(
            "training set has a single class ({} samples, all labelled {}); both labels are required",
            samples.len(),
            positives > 0
        )));
    }
    let in_channels = samples[0].0.tensor().channels();
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.tensor().channels() != in_channels) {
        return Err(Error::Dimension(format!(
            "mixed channel counts: {} vs {}",
            in_channels,
            x.tensor().channels()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::glorot(Architecture::new(in_channels), &mut rng);
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_example: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = &samples[i];
                    let (p, cache) = forward(&params, x)?;
                    Ok((bce_loss(p, *y), backward(&params, &cache, *y)?))
                })
                .collect::<Result<_>>()?;
            loss_sum += per_example.iter().map(|(l, _)| l).sum::<f64>();
            let mut grads = tree_reduce(per_example.into_iter().map(|(_, g)| g).collect())
                .expect("non-empty batch");
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut state, cfg)?;
        }
        if !params.all_finite() {
            return Err(Error::Contract(format!(
                "parameters became non-finite in epoch {epoch}"
            )));
        }
        let xs: Vec<&FeatureStack> = samples.iter().map(|(x, _)| x).collect();
        let probs = predict_all(&params, &xs)?;
        let correct = probs
            .iter()
            .zip(samples)
            .filter(|(&p, (_, y))| (p > 0.5) == *y)
            .count();
        history.push(EpochStats {
            epoch,
            loss: loss_sum / samples.len() as f64,
            acc: correct as f64 / samples.len() as f64,
        });
    }
    Ok((params, state, history))
}
