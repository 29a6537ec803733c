//! Normality scoring against prototypes: the relational path and the
//! distance baselines.

use crate::error::{Error, Result};
use crate::evaluation::PrototypeSet;
use crate::model::RelationalModel;
use crate::numerics::Tensor;

/// Per-test-sample normality scores with ground truth and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub sample_ids: Vec<u64>,
    /// Normality score in [0,1]; high for known-category samples.
    pub scores: Vec<f64>,
    pub is_known: Vec<bool>,
    pub pred_class: Option<Vec<i64>>,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn known_scores(&self) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.is_known)
            .filter(|(_, &k)| k)
            .map(|(&s, _)| s)
            .collect()
    }

    pub fn unknown_scores(&self) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.is_known)
            .filter(|(_, &k)| !k)
            .map(|(&s, _)| s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMetric {
    /// `1 / (1 + euclidean distance)` to each prototype.
    InvEuclidean,
    /// Cosine similarity to each prototype.
    Cosine,
}

impl BaselineMetric {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMetric::InvEuclidean => "inv_euclidean",
            BaselineMetric::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inv_euclidean" => Ok(BaselineMetric::InvEuclidean),
            "cosine" => Ok(BaselineMetric::Cosine),
            other => Err(Error::Config(format!("unknown baseline metric '{other}'"))),
        }
    }
}

fn check_prototypes(prototypes: &PrototypeSet) -> Result<()> {
    if prototypes.n_classes() < 2 {
        return Err(Error::Config(format!(
            "normality scoring needs >= 2 known classes, got {}",
            prototypes.n_classes()
        )));
    }
    Ok(())
}

/// Max of the softmax over per-class similarity values plus the argmax class.
pub(crate) fn msp(u: &[f64], class_ids: &[i64]) -> (f64, i64) {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = u.iter().map(|&v| (v - m).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &e) in exps.iter().enumerate() {
        let p = e / denom;
        if p > best_v {
            best_v = p;
            best = i;
        }
    }
    (best_v, class_ids[best])
}

/// Similarity logits of one test feature row against every prototype,
/// through the relational module and head.
fn relational_u(
    model: &RelationalModel<f32>,
    z_t: &[f32],
    prototypes: &PrototypeSet,
) -> Result<Vec<f64>> {
    let c = prototypes.n_classes();
    let d = prototypes.dim();
    let mut test_rows = Vec::with_capacity(c * d);
    for _ in 0..c {
        test_rows.extend_from_slice(z_t);
    }
    let zi = Tensor::matrix(c, d, test_rows)?;
    let out = model.forward_feature_pairs(&zi, &prototypes.prototypes)?;
    Ok(out.u.iter().map(|&v| v as f64).collect())
}

/// Normality score of a single test feature vector via the relational model:
/// `u_c = head(r(z_t, prototype_c))`, score = max softmax(u).
pub fn normality_score(
    z_t: &Tensor<f32>,
    prototypes: &PrototypeSet,
    model: &RelationalModel<f32>,
) -> Result<(f64, i64)> {
    check_prototypes(prototypes)?;
    if z_t.numel() != prototypes.dim() {
        return Err(Error::ShapeMismatch {
            op: "normality_score",
            lhs: z_t.shape().to_vec(),
            rhs: prototypes.prototypes.shape().to_vec(),
        });
    }
    let u = relational_u(model, z_t.data(), prototypes)?;
    Ok(msp(&u, &prototypes.class_ids))
}

pub(crate) fn baseline_u(
    z_t: &[f32],
    prototypes: &PrototypeSet,
    metric: BaselineMetric,
) -> Result<Vec<f64>> {
    let mut u = Vec::with_capacity(prototypes.n_classes());
    for c in 0..prototypes.n_classes() {
        let p = prototypes.prototypes.row(c);
        let v = match metric {
            BaselineMetric::InvEuclidean => {
                let d2: f64 = z_t
                    .iter()
                    .zip(p)
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum();
                1.0 / (1.0 + d2.sqrt())
            }
            BaselineMetric::Cosine => {
                let dot: f64 = z_t.iter().zip(p).map(|(&a, &b)| a as f64 * b as f64).sum();
                let nz: f64 = z_t.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
                let np: f64 = p.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
                if nz == 0.0 || np == 0.0 {
                    return Err(Error::numeric(
                        "cosine similarity",
                        "zero-norm vector".to_string(),
                    ));
                }
                dot / (nz * np)
            }
        };
        u.push(v);
    }
    Ok(u)
}

/// Normality score of a test feature vector from prototype similarities
/// alone (no trained head).
pub fn baseline_score(
    z_t: &Tensor<f32>,
    prototypes: &PrototypeSet,
    metric: BaselineMetric,
) -> Result<(f64, i64)> {
    check_prototypes(prototypes)?;
    if z_t.numel() != prototypes.dim() {
        return Err(Error::ShapeMismatch {
            op: "baseline_score",
            lhs: z_t.shape().to_vec(),
            rhs: prototypes.prototypes.shape().to_vec(),
        });
    }
    let u = baseline_u(z_t.data(), prototypes, metric)?;
    Ok(msp(&u, &prototypes.class_ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn protos(rows: Vec<Vec<f32>>) -> PrototypeSet {
        let c = rows.len();
        let d = rows[0].len();
        PrototypeSet {
            class_ids: (0..c as i64).collect(),
            prototypes: Tensor::matrix(c, d, rows.into_iter().flatten().collect()).unwrap(),
        }
    }

    #[test]
    fn msp_uniform_gives_one_over_classes() {
        let (score, _) = msp(&[0.3, 0.3, 0.3, 0.3], &[0, 1, 2, 3]);
        assert!((score - 0.25).abs() < 1e-12);
    }

    #[test]
    fn msp_dominant_component_approaches_one() {
        let (score, class) = msp(&[500.0, 0.0], &[7, 8]);
        assert!(score > 1.0 - 1e-12);
        assert_eq!(class, 7);
    }

    #[test]
    fn msp_bounded_between_uniform_and_one() {
        let u = [0.1, -2.0, 3.5, 0.0];
        let (score, _) = msp(&u, &[0, 1, 2, 3]);
        assert!(score >= 0.25 && score <= 1.0);
    }

    #[test]
    fn msp_invariant_to_constant_shift_and_temperature() {
        let u = [0.1, -2.0, 3.5, 0.0];
        let (_, class) = msp(&u, &[0, 1, 2, 3]);
        let shifted: Vec<f64> = u.iter().map(|v| v + 11.0).collect();
        let (_, class_s) = msp(&shifted, &[0, 1, 2, 3]);
        assert_eq!(class, class_s);
        let scaled: Vec<f64> = u.iter().map(|v| v * 0.37).collect();
        let (_, class_t) = msp(&scaled, &[0, 1, 2, 3]);
        assert_eq!(class, class_t);
    }

    #[test]
    fn inv_euclidean_at_prototype_and_unit_distance() {
        let p = protos(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let u = baseline_u(&[1.0, 0.0], &p, BaselineMetric::InvEuclidean).unwrap();
        assert_eq!(u[0], 1.0);
        let u = baseline_u(&[1.0, 1.0], &p, BaselineMetric::InvEuclidean).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let p = protos(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let u = baseline_u(&[0.0, 2.0], &p, BaselineMetric::Cosine).unwrap();
        assert!(u[0].abs() < 1e-12);
        assert!((u[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_is_numeric_error() {
        let p = protos(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            baseline_u(&[0.0, 0.0], &p, BaselineMetric::Cosine),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn single_prototype_rejected() {
        let p = protos(vec![vec![1.0, 0.0]]);
        let z = Tensor::vector(&[1.0f32, 0.0]);
        assert!(matches!(
            baseline_score(&z, &p, BaselineMetric::Cosine),
            Err(Error::Config(_))
        ));
    }
}
