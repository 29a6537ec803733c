//! Score-level ensembling: elementwise averaging of two aligned score sets.

use crate::error::{Error, Result};
use crate::evaluation::ScoreSet;

fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        // constant set carries no ranking information; map to midpoint
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|&s| (s - lo) / (hi - lo)).collect()
}

/// Elementwise arithmetic mean of two score sets over the same samples.
/// With `normalize`, each set is min-max normalized first. Class
/// predictions are carried from `a` (the base method); ensembling does not
/// change known-class predictions.
pub fn ensemble_average(a: &ScoreSet, b: &ScoreSet, normalize: bool) -> Result<ScoreSet> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "score sets of different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if !a.sample_ids.is_empty() && !b.sample_ids.is_empty() && a.sample_ids != b.sample_ids {
        return Err(Error::Data("score sets have mismatched sample ids".into()));
    }
    if a.is_known != b.is_known {
        return Err(Error::Data(
            "score sets disagree on known/unknown ground truth".into(),
        ));
    }
    let (sa, sb) = if normalize {
        (min_max_normalize(&a.scores), min_max_normalize(&b.scores))
    } else {
        (a.scores.clone(), b.scores.clone())
    };
    let scores: Vec<f64> = sa.iter().zip(&sb).map(|(&x, &y)| (x + y) / 2.0).collect();
    Ok(ScoreSet {
        sample_ids: a.sample_ids.clone(),
        scores,
        is_known: a.is_known.clone(),
        pred_class: a.pred_class.clone().or_else(|| b.pred_class.clone()),
    })
}
