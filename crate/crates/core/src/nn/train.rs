use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Workspace};
use super::{Batch, Loss, MlpModel, NnError, Normalizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    /// Per-epoch exponential decay of the learning rate.
    pub lr_decay: f64,
    /// Variance of the Gaussian noise added to raw inputs every epoch.
    pub sigma_aug_sq: f64,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Fit feature (and, for MSE, target) standardization on the training set
    /// when the model has none yet.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            lr0: 1e-3,
            lr_decay: 0.98,
            sigma_aug_sq: 1e-4,
            epochs: 30,
            loss: Loss::Bce,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if !(self.lr0 > 0.0) {
            return Err(NnError::Config("lr0 must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(NnError::Config("lr_decay must lie in (0, 1]".into()));
        }
        if !(self.sigma_aug_sq >= 0.0) {
            return Err(NnError::Config("sigma_aug_sq must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Paired inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Batch,
    pub targets: Batch,
}

impl TrainingSet {
    pub fn new(inputs: Batch, targets: Batch) -> Result<TrainingSet, NnError> {
        if inputs.rows() != targets.rows() {
            return Err(NnError::Shape(format!(
                "{} inputs but {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(TrainingSet { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpModel) -> Adam {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, g: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let groups = model
            .weights_mut()
            .iter_mut()
            .zip(&g.weights)
            .zip(self.m.weights.iter_mut().zip(self.v.weights.iter_mut()));
        for ((p, g), (m, v)) in groups {
            adam_slice(p, g, m, v, lr, c1, c2);
        }
        let groups = model
            .biases_mut()
            .iter_mut()
            .zip(&g.biases)
            .zip(self.m.biases.iter_mut().zip(self.v.biases.iter_mut()));
        for ((p, g), (m, v)) in groups {
            adam_slice(p, g, m, v, lr, c1, c2);
        }
    }
}

fn adam_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
    }
}

/// Mini-batch Adam with per-epoch exponential learning-rate decay and fresh
/// input noise every epoch. Deterministic for a fixed `config.seed`.
pub fn train(
    model: &mut MlpModel,
    data: &TrainingSet,
    validation: Option<&TrainingSet>,
    config: &TrainConfig,
) -> Result<TrainReport, NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if data.inputs.cols() != model.input_dim() || data.targets.cols() != model.output_dim() {
        return Err(NnError::Shape(format!(
            "dataset is {}->{}, model is {}->{}",
            data.inputs.cols(),
            data.targets.cols(),
            model.input_dim(),
            model.output_dim()
        )));
    }
    if config.standardize {
        if model.feature_norm().is_none() {
            model.set_feature_norm(Some(Normalizer::fit(&data.inputs)))?;
        }
        if config.loss == Loss::Mse && model.target_norm().is_none() {
            model.set_target_norm(Some(Normalizer::fit(&data.targets)))?;
        }
    }

    let (din, dout) = (model.input_dim(), model.output_dim());
    let x = model.normalize_inputs(&data.inputs);
    let t = model.normalize_targets(&data.targets);
    // noise is drawn in raw units; in standardized space it is scaled by 1/std
    let noise_scale: Vec<f64> = match model.feature_norm() {
        Some(n) => n.std.iter().map(|s| 1.0 / s).collect(),
        None => vec![1.0; din],
    };
    let noise = if config.sigma_aug_sq > 0.0 {
        Some(Normal::new(0.0, config.sigma_aug_sq.sqrt()).map_err(|e| NnError::Config(e.to_string()))?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = Adam::new(model);
    let mut grads = Gradients::zeros_like(model);
    let mut ws = Workspace::default();
    let mut bx = Vec::with_capacity(config.batch_size * din);
    let mut bt = Vec::with_capacity(config.batch_size * dout);
    let mut report = TrainReport { epochs: Vec::new() };

    for epoch in 0..config.epochs {
        let lr = config.lr0 * config.lr_decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            bx.clear();
            bt.clear();
            for &i in chunk {
                bx.extend_from_slice(&x[i * din..(i + 1) * din]);
                bt.extend_from_slice(&t[i * dout..(i + 1) * dout]);
            }
            if let Some(dist) = &noise {
                for row in bx.chunks_exact_mut(din) {
                    for (v, s) in row.iter_mut().zip(&noise_scale) {
                        *v += dist.sample(&mut rng) * s;
                    }
                }
            }
            grads.clear();
            let loss = model.accumulate(
                &bx,
                &bt,
                chunk.len(),
                config.loss,
                0..dout,
                &mut ws,
                &mut grads,
            );
            if !loss.is_finite() {
                return Err(NnError::Diverged {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            total += loss * chunk.len() as f64;
            adam.update(model, &grads, lr);
        }
        let val_loss = match validation {
            Some(v) if !v.is_empty() => Some(model.loss(&v.inputs, &v.targets, config.loss, None)?),
            _ => None,
        };
        report.epochs.push(EpochMetrics {
            epoch,
            lr,
            train_loss: total / data.len() as f64,
            val_loss,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_configs_are_rejected() {
        let mut m = MlpModel::new(&[1, 1], 0).unwrap();
        let data = TrainingSet::new(
            Batch::new(1, 1, vec![1.0]).unwrap(),
            Batch::new(1, 1, vec![2.0]).unwrap(),
        )
        .unwrap();
        for cfg in [
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { lr_decay: 1.5, ..Default::default() },
            TrainConfig { sigma_aug_sq: -1.0, ..Default::default() },
        ] {
            assert!(matches!(train(&mut m, &data, None, &cfg), Err(NnError::Config(_))));
        }
    }

    #[test]
    fn nan_loss_aborts() {
        let mut m = MlpModel::new(&[1, 1], 0).unwrap();
        let data = TrainingSet::new(
            Batch::new(1, 1, vec![1.0]).unwrap(),
            Batch::new(1, 1, vec![f64::NAN]).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig {
            loss: Loss::Mse,
            standardize: false,
            epochs: 2,
            ..Default::default()
        };
        assert!(matches!(
            train(&mut m, &data, None, &cfg),
            Err(NnError::Diverged { epoch: 0, batch: 0, .. })
        ));
    }
}
