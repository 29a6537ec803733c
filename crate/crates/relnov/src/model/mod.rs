//! The relational model: feature extractor, transformer relational module
//! with learnable label token, similarity head, and the fixed-aggregation
//! ablation variants.

mod checkpoint;
pub(crate) mod forward;
mod params;

pub use checkpoint::{load as load_checkpoint, save as save_checkpoint};
pub use forward::{combine_pair, BatchOutput};
pub use params::{count_params, fixed_agg_hidden_width, ModelParams, RelationalModel, RelationalParams};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// Single logit squashed by a sigmoid.
    RegressionSigmoid,
    /// Two logits (different / same) with softmax.
    Classification2Way,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Transformer over the `[label, z_i, z_j]` token tuple.
    Transformer,
    /// Elementwise max of the pair, then an MLP.
    Max,
    /// Elementwise sum of the pair, then an MLP.
    Sum,
    /// Concatenation of the pair, then an MLP. Order-sensitive.
    Concat,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Transformer => "transformer",
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
            Aggregation::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(Aggregation::Transformer),
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            "concat" => Ok(Aggregation::Concat),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

impl HeadMode {
    pub fn name(self) -> &'static str {
        match self {
            HeadMode::RegressionSigmoid => "regression_sigmoid",
            HeadMode::Classification2Way => "classification_2way",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regression_sigmoid" => Ok(HeadMode::RegressionSigmoid),
            "classification_2way" => Ok(HeadMode::Classification2Way),
            other => Err(Error::Config(format!("unknown head_mode '{other}'"))),
        }
    }

    pub fn n_logits(self) -> usize {
        match self {
            HeadMode::RegressionSigmoid => 1,
            HeadMode::Classification2Way => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_feat: usize,
    pub d_model: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    /// MLP hidden width = mlp_ratio * d_model.
    pub mlp_ratio: usize,
    pub head_mode: HeadMode,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_in: 16,
            d_feat: 64,
            d_model: 64,
            num_blocks: 4,
            num_heads: 4,
            mlp_ratio: 4,
            head_mode: HeadMode::RegressionSigmoid,
            aggregation: Aggregation::Transformer,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_feat == 0 || self.d_model == 0 {
            return Err(Error::Config("all dimensions must be positive".into()));
        }
        if self.num_blocks < 1 {
            return Err(Error::Config("num_blocks must be >= 1".into()));
        }
        if self.mlp_ratio < 1 {
            return Err(Error::Config("mlp_ratio must be >= 1".into()));
        }
        if self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        Ok(())
    }

    /// Tiny configuration used by the end-to-end gradient check.
    pub fn tiny() -> Self {
        ModelConfig {
            d_in: 6,
            d_feat: 8,
            d_model: 8,
            num_blocks: 2,
            num_heads: 2,
            mlp_ratio: 4,
            head_mode: HeadMode::RegressionSigmoid,
            aggregation: Aggregation::Transformer,
            seed: 0,
        }
    }
}
