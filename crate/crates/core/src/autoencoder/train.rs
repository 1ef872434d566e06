use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Result, RomError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply by `factor` once the epoch loss has not improved by a
    /// relative `threshold` for more than `patience` epochs, never going
    /// below `min_lr`.
    Plateau {
        patience: usize,
        factor: f64,
        threshold: f64,
        #[serde(default)]
        min_lr: f64,
    },
    /// Multiply by `factor` every `step` epochs until epoch `until`, then
    /// hold `then`.
    Step { step: usize, factor: f64, until: usize, then: f64 },
}

impl Schedule {
    pub fn plateau() -> Self {
        Schedule::Plateau { patience: 5, factor: 0.25, threshold: 1e-4, min_lr: 0.0 }
    }

    pub fn step() -> Self {
        Schedule::Step { step: 100, factor: 0.8, until: 1000, then: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            schedule: Schedule::plateau(),
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".to_string());
        }
        if !(self.learning_rate > 0.0) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            errs.push(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            errs.push("Adam needs 0 <= beta < 1 and epsilon > 0".into());
        }
        match self.schedule {
            Schedule::Plateau { factor, .. } | Schedule::Step { factor, .. } if !(factor > 0.0 && factor <= 1.0) => {
                errs.push(format!("schedule factor must lie in (0, 1], got {factor}"))
            }
            Schedule::Step { step: 0, .. } => errs.push("step schedule needs a positive step".into()),
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RomError::Config(errs))
        }
    }
}

/// Learning-rate state for one run.
#[derive(Debug, Clone)]
struct LrState {
    lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl LrState {
    /// Rate to use in `epoch` (0-based), given the previous epoch's loss.
    fn next(&mut self, cfg: &TrainConfig, epoch: usize, last_loss: Option<f64>) -> f64 {
        match cfg.schedule {
            Schedule::Constant => {}
            Schedule::Plateau { patience, factor, threshold, min_lr } => {
                if let Some(l) = last_loss {
                    if l < self.best * (1.0 - threshold) {
                        self.best = l;
                        self.bad_epochs = 0;
                    } else {
                        self.bad_epochs += 1;
                        if self.bad_epochs > patience {
                            self.lr = (self.lr * factor).max(min_lr);
                            self.bad_epochs = 0;
                        }
                    }
                }
            }
            Schedule::Step { step, factor, until, then } => {
                self.lr = if epoch < until { cfg.learning_rate * factor.powi((epoch / step) as i32) } else { then };
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch.
    pub loss_history: Vec<f64>,
    pub final_learning_rate: f64,
}

/// Adam on the mean per-sample squared reconstruction error. `samples` holds
/// row-major `(n_v, n_x)` samples back to back.
pub fn train(net: &mut Network, samples: &[f64], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(net, samples, cfg, |_, _, _| {})
}

/// As [`train`], calling `on_epoch(epoch, loss, lr)` after each epoch.
pub fn train_with(
    net: &mut Network,
    samples: &[f64],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    let per = net.architecture().sample_len();
    if samples.is_empty() || !samples.len().is_multiple_of(per) {
        return Err(RomError::DimensionMismatch { expected: per, got: samples.len() });
    }
    let n = samples.len() / per;
    let np = net.n_params();
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr_state = LrState { lr: cfg.learning_rate, best: f64::INFINITY, bad_epochs: 0 };
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_buf = Vec::with_capacity(cfg.batch_size * per);
    let mut t = 0i32;
    for epoch in 0..cfg.epochs {
        let lr = lr_state.next(cfg, epoch, history.last().copied());
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_buf.clear();
            for &i in chunk {
                batch_buf.extend_from_slice(&samples[i * per..(i + 1) * per]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let b = chunk.len();
            total += net.loss_and_grad(&batch_buf, b, 1.0 / b as f64, &mut grad);
            t += 1;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            let params = net.params_mut();
            for k in 0..np {
                let g = grad[k] + cfg.weight_decay * params[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                params[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.epsilon);
            }
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(RomError::TrainingDiverged { epoch });
        }
        history.push(loss);
        on_epoch(epoch, loss, lr);
    }
    Ok(TrainReport { loss_history: history, final_learning_rate: lr_state.lr })
}
