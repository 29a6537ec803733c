//! Anchor/partner pair construction and batching.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// One training pair: indices into the dataset plus the same-class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSpec {
    pub anchor: usize,
    pub partner: usize,
    pub same_class: bool,
}

/// Materialized batch of pairs.
#[derive(Debug, Clone)]
pub struct PairBatch<S: Scalar> {
    pub anchors: Tensor<S>,
    pub partners: Tensor<S>,
    /// 1 for same-class pairs, 0 otherwise.
    pub labels: Vec<S>,
}

impl<S: Scalar> PairBatch<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Build exactly `2n` pairs: for every sample used as anchor, one partner
/// from the same class (the anchor itself only when its class is a
/// singleton) and one from a different class. The result order is shuffled
/// with `rng`.
pub fn create_pairs<R: Rng>(dataset: &LabeledDataset, rng: &mut R) -> Result<Vec<PairSpec>> {
    let by_class = dataset.indices_by_class();
    if by_class.len() < 2 {
        return Err(Error::Data(format!(
            "cannot form different-class pairs with {} class(es)",
            by_class.len()
        )));
    }
    let n = dataset.len();
    let labels = dataset.labels();
    let class_of: Vec<&[usize]> = {
        // class id -> member indices, for O(1) same-class lookup
        let max_class = *labels.iter().max().expect(">=2 classes") as usize;
        let mut table: Vec<&[usize]> = vec![&[]; max_class + 1];
        for (c, idx) in &by_class {
            table[*c as usize] = idx.as_slice();
        }
        table
    };

    let mut pairs = Vec::with_capacity(2 * n);
    for anchor in 0..n {
        let same = class_of[labels[anchor] as usize];
        let partner = if same.len() == 1 {
            anchor
        } else {
            // rejection-sample the anchor away; keeps the draw uniform
            loop {
                let cand = same[rng.random_range(0..same.len())];
                if cand != anchor {
                    break cand;
                }
            }
        };
        pairs.push(PairSpec {
            anchor,
            partner,
            same_class: true,
        });

        let diff = loop {
            let cand = rng.random_range(0..n);
            if labels[cand] != labels[anchor] {
                break cand;
            }
        };
        pairs.push(PairSpec {
            anchor,
            partner: diff,
            same_class: false,
        });
    }
    pairs.shuffle(rng);
    Ok(pairs)
}

/// Slice `pairs[cursor..cursor+batch_size]` (shorter at the tail) and gather
/// the corresponding feature rows.
pub fn next_batch<S: Scalar>(
    dataset: &LabeledDataset,
    pairs: &[PairSpec],
    batch_size: usize,
    cursor: usize,
) -> Result<PairBatch<S>> {
    if batch_size == 0 {
        return Err(Error::Contract("batch_size must be >= 1".into()));
    }
    let end = (cursor + batch_size).min(pairs.len());
    let slice = &pairs[cursor.min(end)..end];
    let anchor_idx: Vec<usize> = slice.iter().map(|p| p.anchor).collect();
    let partner_idx: Vec<usize> = slice.iter().map(|p| p.partner).collect();
    let gather = |idx: &[usize]| -> Tensor<S> {
        dataset.features().gather_rows(idx).cast::<S>()
    };
    Ok(PairBatch {
        anchors: gather(&anchor_idx),
        partners: gather(&partner_idx),
        labels: slice
            .iter()
            .map(|p| if p.same_class { S::one() } else { S::zero() })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(labels: Vec<i64>) -> LabeledDataset {
        let n = labels.len();
        let features = Tensor::matrix(n, 2, (0..2 * n).map(|i| i as f32).collect()).unwrap();
        LabeledDataset::new("t", features, labels, vec![0; n]).unwrap()
    }

    #[test]
    fn two_classes_of_two_give_eight_balanced_pairs() {
        let ds = dataset(vec![0, 0, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = create_pairs(&ds, &mut rng).unwrap();
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs.iter().filter(|p| p.same_class).count(), 4);
        let labels = ds.labels();
        for p in &pairs {
            if p.same_class {
                assert_eq!(labels[p.anchor], labels[p.partner]);
                assert_ne!(p.anchor, p.partner, "no self-pair outside singleton classes");
            } else {
                assert_ne!(labels[p.anchor], labels[p.partner]);
            }
        }
    }

    #[test]
    fn singleton_class_pairs_with_itself() {
        let ds = dataset(vec![0, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = create_pairs(&ds, &mut rng).unwrap();
        let self_pair = pairs
            .iter()
            .find(|p| p.anchor == 0 && p.same_class)
            .unwrap();
        assert_eq!(self_pair.partner, 0);
    }

    #[test]
    fn single_class_is_a_data_error() {
        let ds = dataset(vec![0, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            create_pairs(&ds, &mut rng),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn same_seed_reproduces_the_pair_list() {
        let ds = dataset(vec![0, 0, 1, 1, 2, 2]);
        let a = create_pairs(&ds, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = create_pairs(&ds, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn advancing_rng_changes_epoch_pairs_reproducibly() {
        let ds = dataset(vec![0, 0, 1, 1, 2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e1 = create_pairs(&ds, &mut rng).unwrap();
        let e2 = create_pairs(&ds, &mut rng).unwrap();
        assert_ne!(e1, e2);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(e1, create_pairs(&ds, &mut rng2).unwrap());
        assert_eq!(e2, create_pairs(&ds, &mut rng2).unwrap());
    }

    #[test]
    fn batching_splits_three_three_two() {
        let ds = dataset(vec![0, 0, 1, 1]);
        let pairs = create_pairs(&ds, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let sizes: Vec<usize> = (0..pairs.len())
            .step_by(3)
            .map(|c| next_batch::<f32>(&ds, &pairs, 3, c).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![3, 3, 2]);
    }

    #[test]
    fn oversized_batch_is_a_single_batch() {
        let ds = dataset(vec![0, 0, 1, 1]);
        let pairs = create_pairs(&ds, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = next_batch::<f32>(&ds, &pairs, 100, 0).unwrap();
        assert_eq!(b.len(), 8);
    }

    #[test]
    fn batch_gathers_matching_feature_rows() {
        let ds = dataset(vec![0, 0, 1, 1]);
        let pairs = create_pairs(&ds, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = next_batch::<f32>(&ds, &pairs, 2, 0).unwrap();
        for (r, p) in pairs.iter().take(2).enumerate() {
            let want: Vec<f32> = ds.features().row(p.anchor).to_vec();
            assert_eq!(b.anchors.row(r), want.as_slice());
        }
    }
}
