use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::loss_grad_correct;
use super::{PairSample, RelNetError, RelNetParams};

/// When the learning rate moves from `lr_initial` toward `lr_final`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LrStep {
    #[default]
    PerEpoch,
    PerBatch,
}

/// SGD with momentum and L2 weight decay; the rate decays linearly.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub lr_step: LrStep,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: 0.01,
            lr_final: 0.001,
            lr_step: LrStep::PerEpoch,
            epochs: 30,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RelNetError> {
        let lr_ok = |lr: f64| lr.is_finite() && lr >= 0.0;
        if !lr_ok(self.lr_initial) || !lr_ok(self.lr_final) {
            return Err(RelNetError::InvalidTrainConfig("learning rates must be finite and non-negative"));
        }
        if self.epochs == 0 {
            return Err(RelNetError::InvalidTrainConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(RelNetError::InvalidTrainConfig("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(RelNetError::InvalidTrainConfig("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(RelNetError::InvalidTrainConfig("weight decay must be finite and non-negative"));
        }
        Ok(())
    }

    /// Learning rate at `progress` in `[0, 1]`.
    fn lr_at(&self, progress: f64) -> f64 {
        self.lr_initial + (self.lr_final - self.lr_initial) * progress
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub lr: f64,
}

/// Trains `params` on `dataset`, returning the final parameters and one
/// [`EpochStats`] per epoch. Deterministic given `cfg.seed` and the dataset
/// order.
pub fn train(
    params: &RelNetParams,
    dataset: &[PairSample],
    cfg: &TrainConfig,
) -> Result<(RelNetParams, Vec<EpochStats>), RelNetError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(RelNetError::EmptyDataset);
    }
    let first = dataset[0].label;
    if dataset.iter().all(|s| s.label == first) {
        return Err(RelNetError::SingleClass);
    }

    let mut params = params.clone();
    let mut velocity = alloc::vec![0.0; params.num_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let batches_per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let epoch_progress = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 0.0 };
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut lr = cfg.lr_at(epoch_progress);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.lr_step == LrStep::PerBatch {
                let progress = if total_steps > 1 { step as f64 / (total_steps - 1) as f64 } else { 0.0 };
                lr = cfg.lr_at(progress);
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let (loss, grads, ok) = loss_grad_correct(&params, &batch)?;
            if !loss.is_finite() {
                return Err(RelNetError::NonFiniteLoss { epoch, batch: b, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += ok;

            let grads = grads.to_flat();
            params.for_each_mut(|i, w| {
                let v = cfg.momentum * velocity[i] + grads[i] + cfg.weight_decay * *w;
                velocity[i] = v;
                *w -= lr * v;
            });
            if !params.is_finite() {
                return Err(RelNetError::NonFiniteLoss { epoch, batch: b, loss: f64::NAN });
            }
            step += 1;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            train_acc: correct as f64 / dataset.len() as f64,
            lr,
        });
    }
    Ok((params, history))
}

/// Fraction of `samples` whose predicted label matches.
pub fn accuracy(params: &RelNetParams, samples: &[PairSample]) -> Result<f64, RelNetError> {
    let mut ok = 0usize;
    for s in samples {
        if super::predict(params, &s.input)?.0 == s.label {
            ok += 1;
        }
    }
    Ok(ok as f64 / samples.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relnet::{PairInput, RelNetConfig, RelationLabel, GRID};
    use crate::scene::MaskRaster;
    use rand::Rng;

    /// Labels depend only on the vertical offset feature.
    fn separable(n: usize, seed: u64) -> Vec<PairSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = RelationLabel::ALL[i % 3];
                let dy = match label {
                    RelationLabel::Above => rng.random_range(-0.9..-0.5),
                    RelationLabel::Nearby => rng.random_range(-0.2..0.2),
                    RelationLabel::Other => rng.random_range(0.5..0.9),
                };
                let mut position = [0.0; 8];
                position[7] = dy;
                position[0] = rng.random_range(0.0..1.0);
                PairSample {
                    input: PairInput { raster: MaskRaster::zeros(GRID, GRID), position, classes: [0.0; 8] },
                    label,
                }
            })
            .collect()
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig { lr_initial: 0.05, lr_final: 0.01, epochs, batch_size: 16, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn learns_a_separable_problem() {
        let data = separable(120, 1);
        let p = RelNetParams::init(RelNetConfig::compact(2, 16, 16), 5).unwrap();
        let (trained, history) = train(&p, &data, &small_cfg(15)).unwrap();
        assert_eq!(history.len(), 15);
        assert!(history.last().unwrap().loss < history[0].loss);
        assert!(accuracy(&trained, &data).unwrap() >= 0.95);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(60, 2);
        let p = RelNetParams::init(RelNetConfig::compact(2, 8, 8), 5).unwrap();
        let a = train(&p, &data, &small_cfg(3)).unwrap();
        let b = train(&p, &data, &small_cfg(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let data = separable(40, 2);
        let p = RelNetParams::init(RelNetConfig::compact(2, 8, 8), 5).unwrap();
        let cfg = TrainConfig { lr_initial: 0.0, lr_final: 0.0, epochs: 2, ..TrainConfig::default() };
        let (trained, _) = train(&p, &data, &cfg).unwrap();
        // Decay is scaled by the learning rate: the shrink factor is exactly 1.
        assert_eq!(trained, p);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let p = RelNetParams::init(RelNetConfig::compact(2, 8, 8), 5).unwrap();
        assert_eq!(train(&p, &[], &TrainConfig::default()).unwrap_err(), RelNetError::EmptyDataset);
        let one_class: Vec<_> = separable(9, 1).into_iter().filter(|s| s.label == RelationLabel::Above).collect();
        assert_eq!(train(&p, &one_class, &TrainConfig::default()).unwrap_err(), RelNetError::SingleClass);
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(train(&p, &separable(9, 1), &bad).is_err());
    }

    #[test]
    fn diverging_rate_reports_non_finite_loss() {
        let data = separable(60, 2);
        let p = RelNetParams::init(RelNetConfig::compact(2, 8, 8), 5).unwrap();
        let cfg = TrainConfig { lr_initial: 1e6, lr_final: 1e6, momentum: 0.0, epochs: 5, ..TrainConfig::default() };
        assert!(matches!(train(&p, &data, &cfg), Err(RelNetError::NonFiniteLoss { .. })));
    }
}
