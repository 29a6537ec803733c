//! Forward graphs: feature extraction, the transformer relational module,
//! fixed-aggregation variants, and the similarity head.

use crate::error::{Error, Result};
use crate::model::params::{ModelParams, RelationalParams};
use crate::model::{Aggregation, HeadMode, RelationalModel, LAYER_NORM_EPS};
use crate::numerics::{Scalar, Tape, Tensor, Var};

/// Model parameters bound onto a tape.
pub(crate) struct BoundModel {
    pub params: ModelParams<Var>,
    pub aggregation: Aggregation,
    pub num_heads: usize,
    pub d_in: usize,
    pub d_feat: usize,
}

/// Outputs of a batched pair forward.
#[derive(Debug, Clone)]
pub struct BatchOutput<S: Scalar> {
    /// Raw head outputs, `[b x 1]` (regression) or `[b x 2]` (classification).
    pub logits: Tensor<S>,
    /// Similarity probability per pair, in (0,1).
    pub sigma: Vec<S>,
    /// Similarity logit per pair: the raw head output in regression mode,
    /// the log-odds `logit_same - logit_diff` in classification mode.
    pub u: Vec<S>,
}

pub(crate) fn bind<S: Scalar>(
    tape: &mut Tape<S>,
    model: &RelationalModel<S>,
    trainable: bool,
) -> BoundModel {
    let params = model.params.map(|t| tape.leaf(t.clone(), trainable));
    BoundModel {
        params,
        aggregation: model.config.aggregation,
        num_heads: model.config.num_heads,
        d_in: model.config.d_in,
        d_feat: model.config.d_feat,
    }
}

fn affine<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias_row(y, b)
}

/// `z = f_theta(x)`: two affine layers with a GELU between them.
pub(crate) fn features_graph<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundModel,
    x: Var,
) -> Result<Var> {
    if tape.value(x).cols() != bound.d_in {
        return Err(Error::Config(format!(
            "input width {} does not match configured d_in {}",
            tape.value(x).cols(),
            bound.d_in
        )));
    }
    let h = affine(tape, x, bound.params.feat_w1, bound.params.feat_b1)?;
    let h = tape.gelu(h);
    affine(tape, h, bound.params.feat_w2, bound.params.feat_b2)
}

/// Relational module over feature pairs: `[b x d_feat] x 2 -> [b x d_model]`.
pub(crate) fn relational_graph<S: Scalar>(
    tape: &mut Tape<S>,
    bound: &BoundModel,
    zi: Var,
    zj: Var,
) -> Result<Var> {
    for z in [zi, zj] {
        if tape.value(z).cols() != bound.d_feat {
            return Err(Error::Config(format!(
                "feature width {} does not match configured d_feat {}",
                tape.value(z).cols(),
                bound.d_feat
            )));
        }
    }
    match &bound.params.relational {
        RelationalParams::Transformer {
            proj_w,
            proj_b,
            label_token,
            blocks,
            final_ln_gain,
            final_ln_bias,
        } => {
            let b = tape.value(zi).rows();
            let eps = S::from_f64(LAYER_NORM_EPS);
            let zi_p = affine(tape, zi, *proj_w, *proj_b)?;
            let zj_p = affine(tape, zj, *proj_w, *proj_b)?;
            let lab = tape.broadcast_row(*label_token, b);
            let mut x = tape.interleave3(lab, zi_p, zj_p)?;
            for (bi, blk) in blocks.iter().enumerate() {
                let h = tape.layer_norm(x, blk.ln1_gain, blk.ln1_bias, eps)?;
                let q = affine(tape, h, blk.wq, blk.bq)?;
                let k = affine(tape, h, blk.wk, blk.bk)?;
                let v = affine(tape, h, blk.wv, blk.bv)?;
                let att = tape.attention(q, k, v, b, 3, bound.num_heads)?;
                let o = affine(tape, att, blk.wo, blk.bo)?;
                x = tape.add(x, o)?;
                let h2 = tape.layer_norm(x, blk.ln2_gain, blk.ln2_bias, eps)?;
                let m = affine(tape, h2, blk.mlp_w1, blk.mlp_b1)?;
                let m = tape.gelu(m);
                let m = affine(tape, m, blk.mlp_w2, blk.mlp_b2)?;
                x = tape.add(x, m)?;
                tape.value(x).validate(&format!("transformer block {bi}"))?;
            }
            let vl = tape.stride_rows(x, 0, 3)?;
            tape.layer_norm(vl, *final_ln_gain, *final_ln_bias, eps)
        }
        RelationalParams::FixedAgg { w1, b1, w2, b2, w3, b3 } => {
            let combined = match bound.aggregation {
                Aggregation::Max => tape.max_elem(zi, zj)?,
                Aggregation::Sum => tape.add(zi, zj)?,
                Aggregation::Concat => tape.concat_cols(zi, zj)?,
                Aggregation::Transformer => {
                    return Err(Error::Config(
                        "transformer aggregation with fixed-aggregation parameters".into(),
                    ))
                }
            };
            let h = affine(tape, combined, *w1, *b1)?;
            let h = tape.gelu(h);
            let h = affine(tape, h, *w2, *b2)?;
            let h = tape.gelu(h);
            affine(tape, h, *w3, *b3)
        }
    }
}

/// Head logits from the pair representation: `[b x d_model] -> [b x n_logits]`.
pub(crate) fn head_graph<S: Scalar>(tape: &mut Tape<S>, bound: &BoundModel, v: Var) -> Result<Var> {
    affine(tape, v, bound.params.head_w, bound.params.head_b)
}

/// Similarity probability and similarity logit from raw head outputs.
pub(crate) fn sigma_from_logits<S: Scalar>(head_mode: HeadMode, logits: &Tensor<S>) -> (Vec<S>, Vec<S>) {
    match head_mode {
        HeadMode::RegressionSigmoid => {
            let u: Vec<S> = logits.data().to_vec();
            let sigma = u
                .iter()
                .map(|&x| {
                    if x >= S::zero() {
                        S::one() / (S::one() + (-x).exp())
                    } else {
                        let e = x.exp();
                        e / (S::one() + e)
                    }
                })
                .collect();
            (sigma, u)
        }
        HeadMode::Classification2Way => {
            let mut sigma = Vec::with_capacity(logits.rows());
            let mut u = Vec::with_capacity(logits.rows());
            for row in logits.data().chunks_exact(2) {
                let (diff, same) = (row[0], row[1]);
                // softmax over two logits = sigmoid of their difference
                let d = same - diff;
                let s = if d >= S::zero() {
                    S::one() / (S::one() + (-d).exp())
                } else {
                    let e = d.exp();
                    e / (S::one() + e)
                };
                sigma.push(s);
                u.push(d);
            }
            (sigma, u)
        }
    }
}

/// Elementwise max / sum / concatenation of a feature pair: the fixed
/// aggregation inputs before their MLP.
pub fn combine_pair<S: Scalar>(
    zi: &Tensor<S>,
    zj: &Tensor<S>,
    mode: Aggregation,
) -> Result<Tensor<S>> {
    if zi.shape() != zj.shape() {
        return Err(Error::ShapeMismatch {
            op: "combine_pair",
            lhs: zi.shape().to_vec(),
            rhs: zj.shape().to_vec(),
        });
    }
    match mode {
        Aggregation::Max => Tensor::new(
            zi.shape().to_vec(),
            zi.data()
                .iter()
                .zip(zj.data())
                .map(|(&a, &b)| if b > a { b } else { a })
                .collect(),
        ),
        Aggregation::Sum => Tensor::new(
            zi.shape().to_vec(),
            zi.data().iter().zip(zj.data()).map(|(&a, &b)| a + b).collect(),
        ),
        Aggregation::Concat => {
            let (n, d) = (zi.rows(), zi.cols());
            let mut out = Vec::with_capacity(2 * n * d);
            for i in 0..n {
                out.extend_from_slice(zi.row(i));
                out.extend_from_slice(zj.row(i));
            }
            let shape = if zi.shape().len() <= 1 {
                vec![2 * d]
            } else {
                vec![n, 2 * d]
            };
            Tensor::new(shape, out)
        }
        Aggregation::Transformer => Err(Error::Config(
            "combine_pair applies to fixed aggregations only".into(),
        )),
    }
}

fn as_row<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let d = t.numel();
    Tensor::new(vec![1, d], t.data().to_vec())
}

impl<S: Scalar> RelationalModel<S> {
    /// `f_theta` applied to a batch of inputs, values only.
    pub fn extract_features(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.validate("extract_features input")?;
        let mut tape = Tape::new();
        let bound = bind(&mut tape, self, false);
        let xv = tape.leaf(x.clone(), false);
        let z = features_graph(&mut tape, &bound, xv)?;
        Ok(tape.value(z).clone())
    }

    /// Pair representation `v_l` for a single feature pair.
    pub fn relational_forward(&self, zi: &Tensor<S>, zj: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, self, false);
        let a = tape.leaf(as_row(zi)?, false);
        let b = tape.leaf(as_row(zj)?, false);
        let v = relational_graph(&mut tape, &bound, a, b)?;
        Ok(Tensor::vector(tape.value(v).data()))
    }

    /// Similarity probability from a pair representation.
    pub fn similarity_score(&self, v: &Tensor<S>) -> Result<S> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, self, false);
        let vv = tape.leaf(as_row(v)?, false);
        let logits = head_graph(&mut tape, &bound, vv)?;
        let (sigma, _) = sigma_from_logits(self.config.head_mode, tape.value(logits));
        Ok(sigma[0])
    }

    /// Full pair pipeline on raw inputs: features, relational module, head.
    pub fn forward_pairs(&self, anchors: &Tensor<S>, partners: &Tensor<S>) -> Result<BatchOutput<S>> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, self, false);
        let xa = tape.leaf(anchors.clone(), false);
        let xp = tape.leaf(partners.clone(), false);
        let za = features_graph(&mut tape, &bound, xa)?;
        let zp = features_graph(&mut tape, &bound, xp)?;
        let v = relational_graph(&mut tape, &bound, za, zp)?;
        let logits = head_graph(&mut tape, &bound, v)?;
        let logits = tape.value(logits).clone();
        let (sigma, u) = sigma_from_logits(self.config.head_mode, &logits);
        Ok(BatchOutput { logits, sigma, u })
    }

    /// Pair pipeline on precomputed features (prototype scoring path).
    pub fn forward_feature_pairs(
        &self,
        zi: &Tensor<S>,
        zj: &Tensor<S>,
    ) -> Result<BatchOutput<S>> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, self, false);
        let a = tape.leaf(zi.clone(), false);
        let b = tape.leaf(zj.clone(), false);
        let v = relational_graph(&mut tape, &bound, a, b)?;
        let logits = head_graph(&mut tape, &bound, v)?;
        let logits = tape.value(logits).clone();
        let (sigma, u) = sigma_from_logits(self.config.head_mode, &logits);
        Ok(BatchOutput { logits, sigma, u })
    }
}
