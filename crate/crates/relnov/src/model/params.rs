//! Parameter storage, initialization, and the fixed parameter ordering used
//! by the checkpoint format and the optimizer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{Aggregation, ModelConfig};
use crate::numerics::{Scalar, Tensor};

/// Per-block transformer parameters, in checkpoint order.
#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub wq: T,
    pub bq: T,
    pub wk: T,
    pub bk: T,
    pub wv: T,
    pub bv: T,
    pub wo: T,
    pub bo: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
    pub mlp_w1: T,
    pub mlp_b1: T,
    pub mlp_w2: T,
    pub mlp_b2: T,
}

#[derive(Debug, Clone)]
pub enum RelationalParams<T> {
    Transformer {
        proj_w: T,
        proj_b: T,
        label_token: T,
        blocks: Vec<BlockParams<T>>,
        final_ln_gain: T,
        final_ln_bias: T,
    },
    FixedAgg {
        w1: T,
        b1: T,
        w2: T,
        b2: T,
        w3: T,
        b3: T,
    },
}

/// All learnable tensors of the model, generic over the leaf type so the same
/// structure carries value tensors, tape variables, or optimizer buffers.
///
/// Flattening order (also the checkpoint serialization order):
/// feat_w1, feat_b1, feat_w2, feat_b2, then the relational module
/// (transformer: proj_w, proj_b, label_token, per-block [ln1_gain, ln1_bias,
/// wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, mlp_w1, mlp_b1,
/// mlp_w2, mlp_b2], final_ln_gain, final_ln_bias; fixed aggregation: w1, b1,
/// w2, b2, w3, b3), then head_w, head_b.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub feat_w1: T,
    pub feat_b1: T,
    pub feat_w2: T,
    pub feat_b2: T,
    pub relational: RelationalParams<T>,
    pub head_w: T,
    pub head_b: T,
}

impl<T> ModelParams<T> {
    pub fn flatten(&self) -> Vec<&T> {
        let mut out = vec![&self.feat_w1, &self.feat_b1, &self.feat_w2, &self.feat_b2];
        match &self.relational {
            RelationalParams::Transformer {
                proj_w,
                proj_b,
                label_token,
                blocks,
                final_ln_gain,
                final_ln_bias,
            } => {
                out.extend([proj_w, proj_b, label_token]);
                for b in blocks {
                    out.extend([
                        &b.ln1_gain, &b.ln1_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv,
                        &b.wo, &b.bo, &b.ln2_gain, &b.ln2_bias, &b.mlp_w1, &b.mlp_b1,
                        &b.mlp_w2, &b.mlp_b2,
                    ]);
                }
                out.extend([final_ln_gain, final_ln_bias]);
            }
            RelationalParams::FixedAgg { w1, b1, w2, b2, w3, b3 } => {
                out.extend([w1, b1, w2, b2, w3, b3]);
            }
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    pub fn flatten_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![
            &mut self.feat_w1,
            &mut self.feat_b1,
            &mut self.feat_w2,
            &mut self.feat_b2,
        ];
        match &mut self.relational {
            RelationalParams::Transformer {
                proj_w,
                proj_b,
                label_token,
                blocks,
                final_ln_gain,
                final_ln_bias,
            } => {
                out.extend([proj_w, proj_b, label_token]);
                for b in blocks {
                    out.extend([
                        &mut b.ln1_gain,
                        &mut b.ln1_bias,
                        &mut b.wq,
                        &mut b.bq,
                        &mut b.wk,
                        &mut b.bk,
                        &mut b.wv,
                        &mut b.bv,
                        &mut b.wo,
                        &mut b.bo,
                        &mut b.ln2_gain,
                        &mut b.ln2_bias,
                        &mut b.mlp_w1,
                        &mut b.mlp_b1,
                        &mut b.mlp_w2,
                        &mut b.mlp_b2,
                    ]);
                }
                out.extend([final_ln_gain, final_ln_bias]);
            }
            RelationalParams::FixedAgg { w1, b1, w2, b2, w3, b3 } => {
                out.extend([w1, b1, w2, b2, w3, b3]);
            }
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    /// Names aligned with `flatten`, for optimizer abort messages.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["feat_w1", "feat_b1", "feat_w2", "feat_b2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        match &self.relational {
            RelationalParams::Transformer { blocks, .. } => {
                out.extend(["proj_w", "proj_b", "label_token"].iter().map(|s| s.to_string()));
                for i in 0..blocks.len() {
                    for f in [
                        "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                        "ln2_gain", "ln2_bias", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
                    ] {
                        out.push(format!("block{i}.{f}"));
                    }
                }
                out.extend(["final_ln_gain", "final_ln_bias"].iter().map(|s| s.to_string()));
            }
            RelationalParams::FixedAgg { .. } => {
                out.extend(["agg_w1", "agg_b1", "agg_w2", "agg_b2", "agg_w3", "agg_b3"]
                    .iter()
                    .map(|s| s.to_string()));
            }
        }
        out.extend(["head_w", "head_b"].iter().map(|s| s.to_string()));
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            feat_w1: f(&self.feat_w1),
            feat_b1: f(&self.feat_b1),
            feat_w2: f(&self.feat_w2),
            feat_b2: f(&self.feat_b2),
            relational: match &self.relational {
                RelationalParams::Transformer {
                    proj_w,
                    proj_b,
                    label_token,
                    blocks,
                    final_ln_gain,
                    final_ln_bias,
                } => RelationalParams::Transformer {
                    proj_w: f(proj_w),
                    proj_b: f(proj_b),
                    label_token: f(label_token),
                    blocks: blocks
                        .iter()
                        .map(|b| BlockParams {
                            ln1_gain: f(&b.ln1_gain),
                            ln1_bias: f(&b.ln1_bias),
                            wq: f(&b.wq),
                            bq: f(&b.bq),
                            wk: f(&b.wk),
                            bk: f(&b.bk),
                            wv: f(&b.wv),
                            bv: f(&b.bv),
                            wo: f(&b.wo),
                            bo: f(&b.bo),
                            ln2_gain: f(&b.ln2_gain),
                            ln2_bias: f(&b.ln2_bias),
                            mlp_w1: f(&b.mlp_w1),
                            mlp_b1: f(&b.mlp_b1),
                            mlp_w2: f(&b.mlp_w2),
                            mlp_b2: f(&b.mlp_b2),
                        })
                        .collect(),
                    final_ln_gain: f(final_ln_gain),
                    final_ln_bias: f(final_ln_bias),
                },
                RelationalParams::FixedAgg { w1, b1, w2, b2, w3, b3 } => RelationalParams::FixedAgg {
                    w1: f(w1),
                    b1: f(b1),
                    w2: f(w2),
                    b2: f(b2),
                    w3: f(w3),
                    b3: f(b3),
                },
            },
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }
}

/// The model: configuration plus parameter tensors.
#[derive(Debug, Clone)]
pub struct RelationalModel<S: Scalar> {
    pub config: ModelConfig,
    pub params: ModelParams<Tensor<S>>,
}

/// Aggregation-MLP input width.
fn agg_input_dim(config: &ModelConfig) -> usize {
    match config.aggregation {
        Aggregation::Concat => 2 * config.d_feat,
        _ => config.d_feat,
    }
}

/// Parameter count of the transformer relational module (projection, label
/// token, blocks, final layer norm) for a given config.
fn transformer_relational_params(config: &ModelConfig) -> usize {
    let d = config.d_model;
    let hidden = config.mlp_ratio * d;
    let per_block = 2 * d + 4 * (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
    (config.d_feat * d + d) + d + config.num_blocks * per_block + 2 * d
}

/// Hidden width of the fixed-aggregation MLP, chosen so its parameter count
/// matches the transformer relational module as closely as possible.
pub fn fixed_agg_hidden_width(config: &ModelConfig) -> usize {
    let target = transformer_relational_params(config) as f64;
    let d_in = agg_input_dim(config) as f64;
    let d_out = config.d_model as f64;
    // params(h) = h^2 + h*(d_in + 2 + d_out) + d_out
    let b = d_in + 2.0 + d_out;
    let h0 = (-b + (b * b + 4.0 * (target - d_out)).sqrt()) / 2.0;
    let count = |h: f64| h * h + h * b + d_out;
    let lo = h0.floor().max(1.0);
    let hi = lo + 1.0;
    if (count(lo) - target).abs() <= (count(hi) - target).abs() {
        lo as usize
    } else {
        hi as usize
    }
}

/// Total learnable parameter count implied by a config.
pub fn count_params(config: &ModelConfig) -> usize {
    let feat = config.d_in * config.d_feat
        + config.d_feat
        + config.d_feat * config.d_feat
        + config.d_feat;
    let relational = match config.aggregation {
        Aggregation::Transformer => transformer_relational_params(config),
        _ => {
            let h = fixed_agg_hidden_width(config);
            let d_in = agg_input_dim(config);
            d_in * h + h + h * h + h + h * config.d_model + config.d_model
        }
    };
    let head = config.d_model * config.head_mode.n_logits() + config.head_mode.n_logits();
    feat + relational + head
}

impl<S: Scalar> RelationalModel<S> {
    /// Seeded initialization: affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// biases zero, layer-norm gains one, label token ~ N(0, 0.02).
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        fn affine_init<S: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<S> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<S> = (0..fan_in * fan_out)
                .map(|_| S::from_f64(rng.random_range(-bound..bound)))
                .collect();
            Tensor::new(vec![fan_in, fan_out], data).expect("sized above")
        }
        let d_feat = config.d_feat;
        let d_model = config.d_model;
        let hidden = config.mlp_ratio * d_model;

        let feat_w1 = affine_init::<S, _>(&mut rng, config.d_in, d_feat);
        let feat_w2 = affine_init::<S, _>(&mut rng, d_feat, d_feat);

        let relational = match config.aggregation {
            Aggregation::Transformer => {
                let proj_w = affine_init::<S, _>(&mut rng, d_feat, d_model);
                let normal = Normal::new(0.0f64, 0.02).expect("valid std");
                let label_token = Tensor::new(
                    vec![d_model],
                    (0..d_model)
                        .map(|_| S::from_f64(normal.sample(&mut rng)))
                        .collect(),
                )?;
                let blocks = (0..config.num_blocks)
                    .map(|_| BlockParams {
                        ln1_gain: ones(d_model),
                        ln1_bias: Tensor::zeros(vec![d_model]),
                        wq: affine_init::<S, _>(&mut rng, d_model, d_model),
                        bq: Tensor::zeros(vec![d_model]),
                        wk: affine_init::<S, _>(&mut rng, d_model, d_model),
                        bk: Tensor::zeros(vec![d_model]),
                        wv: affine_init::<S, _>(&mut rng, d_model, d_model),
                        bv: Tensor::zeros(vec![d_model]),
                        wo: affine_init::<S, _>(&mut rng, d_model, d_model),
                        bo: Tensor::zeros(vec![d_model]),
                        ln2_gain: ones(d_model),
                        ln2_bias: Tensor::zeros(vec![d_model]),
                        mlp_w1: affine_init::<S, _>(&mut rng, d_model, hidden),
                        mlp_b1: Tensor::zeros(vec![hidden]),
                        mlp_w2: affine_init::<S, _>(&mut rng, hidden, d_model),
                        mlp_b2: Tensor::zeros(vec![d_model]),
                    })
                    .collect();
                RelationalParams::Transformer {
                    proj_w,
                    proj_b: Tensor::zeros(vec![d_model]),
                    label_token,
                    blocks,
                    final_ln_gain: ones(d_model),
                    final_ln_bias: Tensor::zeros(vec![d_model]),
                }
            }
            _ => {
                let h = fixed_agg_hidden_width(&config);
                let d_in = agg_input_dim(&config);
                RelationalParams::FixedAgg {
                    w1: affine_init::<S, _>(&mut rng, d_in, h),
                    b1: Tensor::zeros(vec![h]),
                    w2: affine_init::<S, _>(&mut rng, h, h),
                    b2: Tensor::zeros(vec![h]),
                    w3: affine_init::<S, _>(&mut rng, h, d_model),
                    b3: Tensor::zeros(vec![d_model]),
                }
            }
        };
        let n_logits = config.head_mode.n_logits();
        let head_w = affine_init::<S, _>(&mut rng, d_model, n_logits);
        let head_b = Tensor::zeros(vec![n_logits]);

        Ok(RelationalModel {
            config,
            params: ModelParams {
                feat_w1,
                feat_b1: Tensor::zeros(vec![d_feat]),
                feat_w2,
                feat_b2: Tensor::zeros(vec![d_feat]),
                relational,
                head_w,
                head_b,
            },
        })
    }

    /// All-zero parameters with the shapes implied by `config`; used by the
    /// checkpoint loader and by shape-sensitive tests.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut model = Self::init(config)?;
        for t in model.params.flatten_mut() {
            for v in t.data_mut() {
                *v = S::zero();
            }
        }
        Ok(model)
    }

    pub fn n_params(&self) -> usize {
        self.params.flatten().iter().map(|t| t.numel()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> RelationalModel<T> {
        RelationalModel {
            config: self.config.clone(),
            params: self.params.map(|t| t.cast::<T>()),
        }
    }
}

fn ones<S: Scalar>(n: usize) -> Tensor<S> {
    Tensor::new(vec![n], vec![S::one(); n]).expect("sized")
}
