//! Weighted soft-target logistic regression trained by deterministic
//! full-batch gradient descent.
//!
//! The objective is
//! `L(w, b) = Σᵢ sᵢ·[softplus(zᵢ) − yᵢ·zᵢ] + λ‖w‖²` with `zᵢ = w·xᵢ + b`,
//! which is the sample-weighted cross-entropy for targets `yᵢ ∈ [0, 1]`.
//! The bias is not penalized.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::FeatureVector;
use crate::error::{Error, Result};
use crate::imputation::WeightedInstance;
use crate::parallel::Strategy;

/// Step halvings allowed within one epoch before training is considered converged.
const MAX_HALVINGS_PER_EPOCH: usize = 64;

/// Relative rise in the objective attributed to rounding rather than overshoot.
const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    /// Part of the config hash only: full-batch descent from zero draws no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config(format!("l2_penalty must be non-negative, got {}", self.l2_penalty)));
        }
        Ok(())
    }

    /// Short content hash identifying the hyperparameters a model was trained with.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dimension: usize,
    weights: Vec<f64>,
    bias: f64,
    config_hash: String,
}

impl TryFrom<ModelFile> for LinearModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.weights.len() != f.dimension {
            return Err(Error::DimensionMismatch {
                expected: f.dimension,
                found: f.weights.len(),
            });
        }
        Ok(LinearModel {
            weights: f.weights,
            bias: f.bias,
            config_hash: f.config_hash,
        })
    }
}

impl From<LinearModel> for ModelFile {
    fn from(m: LinearModel) -> Self {
        ModelFile {
            dimension: m.weights.len(),
            weights: m.weights,
            bias: m.bias,
            config_hash: m.config_hash,
        }
    }
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dimension],
            bias: 0.0,
            config_hash: String::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn logit(&self, features: &FeatureVector) -> Result<f64> {
        self.check_dimension(features)?;
        Ok(features.dot_dense(&self.weights) + self.bias)
    }

    fn check_dimension(&self, features: &FeatureVector) -> Result<()> {
        if features.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: features.dimension(),
            });
        }
        Ok(())
    }
}

/// `σ(w·x + b)`.
pub fn predict(model: &LinearModel, features: &FeatureVector) -> Result<f64> {
    model.logit(features).map(sigmoid)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        (self.weights.iter().map(|g| g * g).sum::<f64>() + self.bias * self.bias).sqrt()
    }
}

fn check_instances(model: &LinearModel, instances: &[WeightedInstance]) -> Result<()> {
    for inst in instances {
        model.check_dimension(&inst.features)?;
    }
    Ok(())
}

struct Partial {
    weights: Vec<f64>,
    bias: f64,
    loss: f64,
}

fn partial(model: &LinearModel, chunk: &[WeightedInstance], with_gradient: bool) -> Partial {
    let mut out = Partial {
        weights: if with_gradient { vec![0.0; model.dimension()] } else { Vec::new() },
        bias: 0.0,
        loss: 0.0,
    };
    for inst in chunk {
        let z = inst.features.dot_dense(&model.weights) + model.bias;
        out.loss += inst.weight * (softplus(z) - inst.target * z);
        if with_gradient {
            let r = inst.weight * (sigmoid(z) - inst.target);
            for (i, v) in inst.features.iter() {
                out.weights[i] += r * v;
            }
            out.bias += r;
        }
    }
    out
}

fn evaluate(
    model: &LinearModel,
    instances: &[WeightedInstance],
    l2_penalty: f64,
    strategy: Strategy,
    with_gradient: bool,
) -> (Gradient, f64) {
    let partials = strategy.map_chunks(instances, |chunk| partial(model, chunk, with_gradient));
    let mut grad = Gradient {
        weights: vec![0.0; if with_gradient { model.dimension() } else { 0 }],
        bias: 0.0,
    };
    let mut loss = 0.0;
    for p in partials {
        loss += p.loss;
        grad.bias += p.bias;
        for (g, v) in grad.weights.iter_mut().zip(&p.weights) {
            *g += v;
        }
    }
    loss += l2_penalty * model.weights.iter().map(|w| w * w).sum::<f64>();
    if with_gradient {
        for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
            *g += 2.0 * l2_penalty * w;
        }
    }
    (grad, loss)
}

/// Analytic gradient and value of the training objective.
pub fn loss_gradient(model: &LinearModel, instances: &[WeightedInstance], l2_penalty: f64) -> Result<(Gradient, f64)> {
    loss_gradient_with(model, instances, l2_penalty, Strategy::default())
}

pub fn loss_gradient_with(
    model: &LinearModel,
    instances: &[WeightedInstance],
    l2_penalty: f64,
    strategy: Strategy,
) -> Result<(Gradient, f64)> {
    check_instances(model, instances)?;
    Ok(evaluate(model, instances, l2_penalty, strategy, true))
}

pub fn loss(model: &LinearModel, instances: &[WeightedInstance], l2_penalty: f64) -> Result<f64> {
    check_instances(model, instances)?;
    Ok(evaluate(model, instances, l2_penalty, Strategy::default(), false).1)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub final_loss: f64,
    /// Objective at initialization followed by one value per completed epoch.
    pub loss_history: Vec<f64>,
    /// Step size in effect at the end of training.
    pub learning_rate: f64,
    pub step_halvings: usize,
}

/// Trains from zero initialization by full-batch gradient descent.
///
/// A step that would increase the objective is retried at half the step
/// size; the reduced step size is kept for later epochs. The objective is
/// therefore non-increasing, and with a small enough learning rate no
/// halving ever happens and this is plain gradient descent.
pub fn train(instances: &[WeightedInstance], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(instances, config, Strategy::default())
}

pub fn train_with(instances: &[WeightedInstance], config: &TrainConfig, strategy: Strategy) -> Result<TrainOutcome> {
    config.validate()?;
    let first = instances.first().ok_or(Error::EmptyDataset)?;
    let mut model = LinearModel::zeros(first.features.dimension());
    model.config_hash = config.hash();
    check_instances(&model, instances)?;

    let l2 = config.l2_penalty;
    let (mut grad, mut current) = evaluate(&model, instances, l2, strategy, true);
    if !current.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut history = vec![current];
    let mut lr = config.learning_rate;
    let mut halvings = 0;

    'epochs: for epoch in 1..=config.epochs {
        let mut attempts = 0;
        loop {
            let candidate = LinearModel {
                weights: model.weights.iter().zip(&grad.weights).map(|(w, g)| w - lr * g).collect(),
                bias: model.bias - lr * grad.bias,
                config_hash: model.config_hash.clone(),
            };
            let (next_grad, next) = evaluate(&candidate, instances, l2, strategy, true);
            if next.is_nan() || (next.is_infinite() && lr < f64::MIN_POSITIVE) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if next <= current {
                model = candidate;
                grad = next_grad;
                current = next;
                break;
            }
            if next - current <= ROUNDING_SLACK * current.abs() {
                // The rise is summation noise: the objective has converged.
                break 'epochs;
            }
            attempts += 1;
            if attempts > MAX_HALVINGS_PER_EPOCH {
                // No descent available at any representable step: stationary.
                break 'epochs;
            }
            lr *= 0.5;
            halvings += 1;
        }
        history.push(current);
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: history.len() });
    }
    Ok(TrainOutcome {
        model,
        final_loss: current,
        loss_history: history,
        learning_rate: lr,
        step_halvings: halvings,
    })
}
