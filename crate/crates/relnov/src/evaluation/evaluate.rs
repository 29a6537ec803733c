//! End-to-end evaluation: prototypes, per-sample scores, metrics.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{auroc, fpr95, h_score, roc_points, MetricsReport};
use crate::evaluation::prototypes::{compute_prototypes, Featurizer};
use crate::evaluation::scoring::{baseline_u, msp, BaselineMetric, ScoreSet};
use crate::model::RelationalModel;
use crate::numerics::Tensor;

/// Scoring rule applied to test samples.
pub enum Scorer<'a> {
    /// Trained relational model: prototypes and test features through
    /// `f_theta`, similarities through the relational module and head.
    Relational(&'a RelationalModel<f32>),
    /// Distance baseline on the raw embeddings.
    Baseline(BaselineMetric),
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Relational(_) => "relational",
            Scorer::Baseline(m) => m.name(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub seed: u64,
    pub config_digest: String,
}

/// Pairs scored per forward pass in the relational path.
const SCORE_CHUNK: usize = 64;

/// Evaluate `scorer` on a support/test split: per-sample normality scores,
/// argmax class predictions, and the metric report.
pub fn evaluate(
    support: &LabeledDataset,
    test: &LabeledDataset,
    scorer: &Scorer,
    opts: &EvalOptions,
) -> Result<(ScoreSet, MetricsReport)> {
    if support.dim() != test.dim() {
        return Err(Error::Data(format!(
            "support dimension {} vs test dimension {}",
            support.dim(),
            test.dim()
        )));
    }
    let featurizer = match scorer {
        Scorer::Relational(m) => {
            if support.dim() != m.config.d_in {
                return Err(Error::Config(format!(
                    "support dimension {} vs model d_in {}",
                    support.dim(),
                    m.config.d_in
                )));
            }
            Featurizer::Model(m)
        }
        Scorer::Baseline(_) => Featurizer::Identity,
    };
    let prototypes = compute_prototypes(support, &featurizer)?;
    if prototypes.n_classes() < 2 {
        return Err(Error::Config(format!(
            "evaluation needs >= 2 known classes, got {}",
            prototypes.n_classes()
        )));
    }

    let test_feats = featurizer.features(test.features())?;
    let n = test.len();
    let c = prototypes.n_classes();
    let d = prototypes.dim();

    let mut scores = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    match scorer {
        Scorer::Relational(model) => {
            let mut start = 0;
            while start < n {
                let end = (start + SCORE_CHUNK).min(n);
                let chunk = end - start;
                let mut zi = Vec::with_capacity(chunk * c * d);
                let mut zj = Vec::with_capacity(chunk * c * d);
                for t in start..end {
                    for pc in 0..c {
                        zi.extend_from_slice(test_feats.row(t));
                        zj.extend_from_slice(prototypes.prototypes.row(pc));
                    }
                }
                let out = model.forward_feature_pairs(
                    &Tensor::matrix(chunk * c, d, zi)?,
                    &Tensor::matrix(chunk * c, d, zj)?,
                )?;
                for row in out.sigma.chunks_exact(c) {
                    let u: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                    let (score, class) = msp(&u, &prototypes.class_ids);
                    scores.push(score);
                    preds.push(class);
                }
                start = end;
            }
        }
        Scorer::Baseline(metric) => {
            for t in 0..n {
                let u = baseline_u(test_feats.row(t), &prototypes, *metric)?;
                let (score, class) = msp(&u, &prototypes.class_ids);
                scores.push(score);
                preds.push(class);
            }
        }
    }

    let known_set: std::collections::BTreeSet<i64> = support.labels().iter().copied().collect();
    let is_known: Vec<bool> = test.labels().iter().map(|l| known_set.contains(l)).collect();
    let score_set = ScoreSet {
        sample_ids: (0..n as u64).collect(),
        scores,
        is_known,
        pred_class: Some(preds),
    };

    let report = report_from_scores(&score_set, test.labels(), opts)?;
    Ok((score_set, report))
}

/// Metrics from a finished score set. `test_labels` drives the known-class
/// accuracy; it must align with the score set.
pub(crate) fn report_from_scores(
    score_set: &ScoreSet,
    test_labels: &[i64],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let auroc_v = auroc(score_set)?;
    let fpr95_v = fpr95(score_set)?;
    let preds = score_set
        .pred_class
        .as_ref()
        .ok_or_else(|| Error::Metric("missing class predictions".into()))?;
    let mut known_total = 0usize;
    let mut known_correct = 0usize;
    for ((&known, &pred), &label) in score_set
        .is_known
        .iter()
        .zip(preds)
        .zip(test_labels)
    {
        if known {
            known_total += 1;
            if pred == label {
                known_correct += 1;
            }
        }
    }
    let acc = if known_total > 0 {
        known_correct as f64 / known_total as f64
    } else {
        0.0
    };
    // unknown detection accuracy at the FPR95 threshold
    let h = h_score(acc, 1.0 - fpr95_v);
    Ok(MetricsReport {
        auroc: auroc_v,
        fpr95: fpr95_v,
        acc,
        h_score: h,
        roc_points: roc_points(score_set)?,
        n_known: score_set.is_known.iter().filter(|&&k| k).count(),
        n_unknown: score_set.is_known.iter().filter(|&&k| !k).count(),
        seed: opts.seed,
        config_digest: opts.config_digest.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::model::ModelConfig;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            dims: 6,
            known_classes: 3,
            unknown_classes: 3,
            samples_per_class: 30,
            class_sep: 6.0,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn no_unknowns_surfaces_metric_error() {
        let spec = SyntheticSpec {
            unknown_classes: 0,
            ..small_spec()
        };
        let (support, test) = generate_synthetic(&spec).unwrap();
        let err = evaluate(
            &support,
            &test,
            &Scorer::Baseline(BaselineMetric::InvEuclidean),
            &EvalOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Metric(_)), "{err}");
    }

    #[test]
    fn baseline_separates_well_separated_clusters() {
        let (support, test) = generate_synthetic(&small_spec()).unwrap();
        let (scores, report) = evaluate(
            &support,
            &test,
            &Scorer::Baseline(BaselineMetric::InvEuclidean),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(scores.len(), test.len());
        assert!(report.auroc > 0.8, "auroc {}", report.auroc);
        assert!(report.acc > 0.9, "acc {}", report.acc);
        assert_eq!(report.n_known, 90);
        assert_eq!(report.n_unknown, 90);
    }

    #[test]
    fn random_model_scores_near_chance() {
        // permutation-null oracle: an untrained model cannot separate
        let spec = SyntheticSpec {
            dims: 16,
            known_classes: 4,
            unknown_classes: 4,
            samples_per_class: 80,
            class_sep: 1.0,
            seed: 5,
            ..SyntheticSpec::default()
        };
        let (support, test) = generate_synthetic(&spec).unwrap();
        let model = RelationalModel::<f32>::init(ModelConfig {
            d_in: 16,
            seed: 12,
            ..ModelConfig::default()
        })
        .unwrap();
        let (_, report) = evaluate(
            &support,
            &test,
            &Scorer::Relational(&model),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(
            (report.auroc - 0.5).abs() <= 0.1,
            "auroc {} not within 0.5 +/- 0.1",
            report.auroc
        );
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (support, test) = generate_synthetic(&small_spec()).unwrap();
        let model = RelationalModel::<f32>::init(ModelConfig {
            d_in: 6,
            ..ModelConfig::tiny()
        })
        .unwrap();
        let run = || {
            evaluate(
                &support,
                &test,
                &Scorer::Relational(&model),
                &EvalOptions::default(),
            )
            .unwrap()
        };
        let (s1, r1) = run();
        let (s2, r2) = run();
        assert_eq!(s1, s2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (support, _) = generate_synthetic(&small_spec()).unwrap();
        let other = SyntheticSpec {
            dims: 8,
            ..small_spec()
        };
        let (_, test) = generate_synthetic(&other).unwrap();
        assert!(evaluate(
            &support,
            &test,
            &Scorer::Baseline(BaselineMetric::Cosine),
            &EvalOptions::default(),
        )
        .is_err());
    }
}
