//! Prototype scoring, baseline scorers, open-set metrics, and ensembling.

mod ensemble;
mod evaluate;
mod metrics;
mod prototypes;
mod scoring;

pub use ensemble::ensemble_average;
pub use evaluate::{evaluate, EvalOptions, Scorer};
pub use metrics::{auroc, fpr95, fpr95_threshold, h_score, roc_points, MetricsReport};
pub use prototypes::{compute_prototypes, Featurizer, PrototypeSet};
pub use scoring::{baseline_score, normality_score, BaselineMetric, ScoreSet};
