//! Relational-reasoning representation learning for semantic novelty
//! detection.
//!
//! The crate trains a small relational transformer to predict whether two
//! samples share a class, then scores test samples against per-class support
//! prototypes to separate known from unknown categories. It ships with
//! distance baselines, open-set metrics (AUROC / FPR95 / H-score), score
//! ensembling, and a seeded multi-domain synthetic benchmark generator.
//!
//! Data-parallel inner loops run on rayon when the default `parallel` feature
//! is enabled; all reductions use fixed orderings, so results are bitwise
//! identical at any thread count (and with the feature disabled).

pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
