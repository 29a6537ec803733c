//! Losses, optimizers, learning-rate schedule, and the training loop.

mod loss;
mod optim;
mod schedule;
mod trainer;

pub use loss::{binary_ce_loss_graph, binary_ce_pair_loss, mse_loss_graph, mse_pair_loss};
pub use optim::{lars_step, sgd_step, OptimizerKind, OptimizerState};
pub use schedule::lr_at;
pub use trainer::{train, TracePoint};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    BinaryCe,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::BinaryCe => "binary_ce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "binary_ce" => Ok(LossKind::BinaryCe),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_iters: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 128,
            base_lr: 0.008,
            warmup_iters: 100,
            optimizer: OptimizerKind::Lars,
            momentum: 0.9,
            weight_decay: 5e-5,
            trust_coefficient: 0.001,
            loss: LossKind::Mse,
            seed: 0,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.warmup_iters == 0 {
            return Err(Error::Config(
                "iterations, batch_size and warmup_iters must be >= 1".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config("base_lr must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}
