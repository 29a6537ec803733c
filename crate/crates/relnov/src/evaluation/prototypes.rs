//! Per-class prototype computation.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::RelationalModel;
use crate::numerics::Tensor;

/// How support/test samples are mapped to feature space before prototype
/// comparison: through the trained extractor, or taken as-is (the baseline
/// scorers operate on raw embeddings).
pub enum Featurizer<'a> {
    Model(&'a RelationalModel<f32>),
    Identity,
}

impl Featurizer<'_> {
    pub fn features(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Featurizer::Model(m) => m.extract_features(x),
            Featurizer::Identity => Ok(x.clone()),
        }
    }
}

/// Mean feature vector per known class, rows aligned with `class_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub class_ids: Vec<i64>,
    pub prototypes: Tensor<f32>,
}

impl PrototypeSet {
    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }
}

/// `prototype[c] = mean of featurizer(x) over support samples with label c`.
pub fn compute_prototypes(
    support: &LabeledDataset,
    featurizer: &Featurizer,
) -> Result<PrototypeSet> {
    if support.is_empty() {
        return Err(Error::Data("empty support set".into()));
    }
    let feats = featurizer.features(support.features())?;
    let d = feats.cols();
    let by_class = support.indices_by_class();
    let mut class_ids = Vec::with_capacity(by_class.len());
    let mut data = Vec::with_capacity(by_class.len() * d);
    for (class, idx) in by_class {
        let mut mean = vec![0.0f32; d];
        for &i in &idx {
            for (m, &v) in mean.iter_mut().zip(feats.row(i)) {
                *m += v;
            }
        }
        let n = idx.len() as f32;
        for m in mean.iter_mut() {
            *m /= n;
        }
        class_ids.push(class);
        data.extend_from_slice(&mean);
    }
    let prototypes = Tensor::matrix(class_ids.len(), d, data)?;
    prototypes.validate("prototypes")?;
    Ok(PrototypeSet {
        class_ids,
        prototypes,
    })
}
