//! Labeled datasets, pair construction, the synthetic multi-domain benchmark
//! generator, and embedding file I/O.

mod io;
mod pairs;
mod synthetic;

pub use io::{read_embeddings, write_embeddings, write_embeddings_csv};
pub use pairs::{create_pairs, next_batch, PairBatch, PairSpec};
pub use synthetic::{generate_synthetic, DomainTransform, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Immutable labeled dataset: features `[n x d]`, integer class ids, and a
/// per-sample domain id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    features: Tensor<f32>,
    labels: Vec<i64>,
    domain_ids: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor<f32>,
        labels: Vec<i64>,
        domain_ids: Vec<i64>,
    ) -> Result<Self> {
        let n = features.rows();
        if features.shape().len() != 2 {
            return Err(Error::Data(format!(
                "features must be 2-D, got shape {:?}",
                features.shape()
            )));
        }
        if labels.len() != n || domain_ids.len() != n {
            return Err(Error::Data(format!(
                "{n} feature rows vs {} labels / {} domain ids",
                labels.len(),
                domain_ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < 0) {
            return Err(Error::Data(format!("negative class id {bad}")));
        }
        features.validate("dataset features")?;
        Ok(LabeledDataset {
            name: name.into(),
            features,
            labels,
            domain_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn domain_ids(&self) -> &[i64] {
        &self.domain_ids
    }

    /// Distinct class ids, ascending.
    pub fn class_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sample indices per class, keyed in ascending class order.
    pub fn indices_by_class(&self) -> Vec<(i64, Vec<usize>)> {
        let classes = self.class_ids();
        classes
            .into_iter()
            .map(|c| {
                let idx = self
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == c)
                    .map(|(i, _)| i)
                    .collect();
                (c, idx)
            })
            .collect()
    }
}
