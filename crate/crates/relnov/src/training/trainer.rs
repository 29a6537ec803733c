//! The training loop: per-epoch pair regeneration, batched forward/backward,
//! optimizer step, loss trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{create_pairs, next_batch, LabeledDataset, PairBatch};
use crate::error::{Error, Result};
use crate::model::forward::{bind, features_graph, head_graph, relational_graph};
use crate::model::{HeadMode, RelationalModel};
use crate::numerics::{Tape, Tensor};
use crate::training::loss::mse_loss_graph;
use crate::training::{lars_step, lr_at, sgd_step, LossKind, OptimizerKind, OptimizerState, TrainConfig};

/// One logged point of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub loss: f32,
    pub lr: f64,
}

fn check_head_loss_pairing(model: &RelationalModel<f32>, cfg: &TrainConfig) -> Result<()> {
    let ok = match cfg.loss {
        LossKind::Mse => model.config.head_mode == HeadMode::RegressionSigmoid,
        LossKind::BinaryCe => model.config.head_mode == HeadMode::Classification2Way,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "loss {} requires the matching head, model has {}",
            cfg.loss.name(),
            model.config.head_mode.name()
        )))
    }
}

/// One forward/backward pass over a batch; returns the loss value and the
/// parameter gradients in flattening order.
fn batch_step(
    model: &RelationalModel<f32>,
    batch: &PairBatch<f32>,
    loss_kind: LossKind,
) -> Result<(f32, Vec<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, model, true);
    let xa = tape.leaf(batch.anchors.clone(), false);
    let xp = tape.leaf(batch.partners.clone(), false);
    let za = features_graph(&mut tape, &bound, xa)?;
    let zp = features_graph(&mut tape, &bound, xp)?;
    let v = relational_graph(&mut tape, &bound, za, zp)?;
    let logits = head_graph(&mut tape, &bound, v)?;
    let loss = match loss_kind {
        LossKind::Mse => {
            let sigma = tape.sigmoid(logits);
            mse_loss_graph(&mut tape, sigma, &batch.labels)?
        }
        LossKind::BinaryCe => {
            let targets: Vec<usize> = batch.labels.iter().map(|&l| l as usize).collect();
            tape.softmax_cross_entropy(logits, &targets)?
        }
    };
    let loss_value = tape.value(loss).item()?;
    tape.backward(loss)?;
    let grads: Vec<Tensor<f32>> = bound.params.flatten().iter().map(|v| tape.grad(**v)).collect();
    Ok((loss_value, grads))
}

/// Train `model` on `support` in place, returning the loss trace.
pub fn train(
    model: &mut RelationalModel<f32>,
    support: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<Vec<TracePoint>> {
    cfg.validate()?;
    check_head_loss_pairing(model, cfg)?;
    if support.dim() != model.config.d_in {
        return Err(Error::Config(format!(
            "support dimension {} vs model d_in {}",
            support.dim(),
            model.config.d_in
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = create_pairs(support, &mut rng)?;
    let mut cursor = 0usize;
    let names = model.params.names();
    let mut state = OptimizerState::for_params(&model.params.flatten());
    let mut trace = Vec::new();

    for iter in 0..cfg.iterations {
        if cursor >= pairs.len() {
            pairs = create_pairs(support, &mut rng)?;
            cursor = 0;
        }
        let batch = next_batch::<f32>(support, &pairs, cfg.batch_size, cursor)?;
        cursor += batch.len();

        let (loss_value, grads) = batch_step(model, &batch, cfg.loss)?;
        if !loss_value.is_finite() {
            return Err(Error::numeric(
                format!("training iteration {iter}"),
                format!("loss became {loss_value}"),
            ));
        }

        let lr = lr_at(iter, cfg);
        let lr_s = lr as f32;
        let mut params = model.params.flatten_mut();
        match cfg.optimizer {
            OptimizerKind::Lars => lars_step(&mut params, &grads, &mut state, cfg, lr_s, &names)?,
            OptimizerKind::Sgd => sgd_step(&mut params, &grads, &mut state, cfg, lr_s, &names)?,
        }

        if iter % cfg.log_every == 0 || iter + 1 == cfg.iterations {
            trace.push(TracePoint {
                iter,
                loss: loss_value,
                lr,
            });
        }
    }
    Ok(trace)
}
