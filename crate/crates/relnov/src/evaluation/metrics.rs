//! Open-set metrics: rank-based AUROC with tie handling, FPR at 95% TPR,
//! ROC curve points, and the H-score.

use crate::error::{Error, Result};
use crate::evaluation::ScoreSet;

/// Final evaluation record. The flat JSON document written next to run
/// outputs carries exactly: auroc, fpr95, acc, h_score, n_known, n_unknown,
/// seed, config_digest.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub auroc: f64,
    pub fpr95: f64,
    /// Argmax-prototype accuracy over known test samples.
    pub acc: f64,
    pub h_score: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub n_known: usize,
    pub n_unknown: usize,
    pub seed: u64,
    pub config_digest: String,
}

fn split_checked(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let known = scores.known_scores();
    let unknown = scores.unknown_scores();
    if known.is_empty() || unknown.is_empty() {
        return Err(Error::Metric(format!(
            "need both known and unknown samples, got {} known / {} unknown",
            known.len(),
            unknown.len()
        )));
    }
    for &s in known.iter().chain(&unknown) {
        if !s.is_finite() {
            return Err(Error::Metric(format!("non-finite score {s}")));
        }
    }
    Ok((known, unknown))
}

/// Probability that a random known sample outscores a random unknown one,
/// ties counted half. Computed from average ranks (Mann-Whitney), which
/// equals the trapezoidal ROC area.
pub fn auroc(scores: &ScoreSet) -> Result<f64> {
    let (known, unknown) = split_checked(scores)?;
    let n_pos = known.len();
    let n_neg = unknown.len();
    let mut all: Vec<(f64, bool)> = known
        .iter()
        .map(|&s| (s, true))
        .chain(unknown.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-indexed average rank of the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Largest threshold t with `frac(known >= t) >= 0.95`.
pub fn fpr95_threshold(scores: &ScoreSet) -> Result<f64> {
    let (known, _) = split_checked(scores)?;
    let mut sorted = known.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let n = sorted.len();
    // ceil(0.95 n) highest scores must clear the threshold
    let k = (0.95 * n as f64).ceil() as usize;
    let k = k.clamp(1, n);
    Ok(sorted[k - 1])
}

/// Fraction of unknown scores at or above the FPR95 threshold.
pub fn fpr95(scores: &ScoreSet) -> Result<f64> {
    let t = fpr95_threshold(scores)?;
    let unknown = scores.unknown_scores();
    Ok(unknown.iter().filter(|&&s| s >= t).count() as f64 / unknown.len() as f64)
}

/// ROC curve points from (0,0) to (1,1), sweeping thresholds down through
/// the distinct scores. Tied scores move both coordinates in one step, so
/// the trapezoidal area matches the rank-based AUROC.
pub fn roc_points(scores: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    let (known, unknown) = split_checked(scores)?;
    let n_pos = known.len() as f64;
    let n_neg = unknown.len() as f64;
    let mut all: Vec<(f64, bool)> = known
        .iter()
        .map(|&s| (s, true))
        .chain(unknown.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_neg, tp as f64 / n_pos));
        i = j;
    }
    Ok(points)
}

/// Harmonic mean `2ab/(a+b)`, zero when both inputs are zero.
pub fn h_score(acc_known: f64, acc_unknown: f64) -> f64 {
    let s = acc_known + acc_unknown;
    if s == 0.0 {
        0.0
    } else {
        2.0 * acc_known * acc_unknown / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn score_set(known: &[f64], unknown: &[f64]) -> ScoreSet {
        let scores: Vec<f64> = known.iter().chain(unknown).copied().collect();
        let is_known: Vec<bool> = known
            .iter()
            .map(|_| true)
            .chain(unknown.iter().map(|_| false))
            .collect();
        ScoreSet {
            sample_ids: (0..scores.len() as u64).collect(),
            scores,
            is_known,
            pred_class: None,
        }
    }

    #[test]
    fn perfect_separation_is_one() {
        let s = score_set(&[0.9, 0.8], &[0.3, 0.2]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
    }

    #[test]
    fn inverted_labels_give_zero() {
        let s = score_set(&[0.3, 0.2], &[0.9, 0.8]);
        assert_eq!(auroc(&s).unwrap(), 0.0);
    }

    #[test]
    fn mixed_case_brute_forced() {
        // pairs: (0.9 > 0.6) wins, (0.4 < 0.6) loses -> 1/2
        let s = score_set(&[0.9, 0.4], &[0.6]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }

    #[test]
    fn ties_count_half() {
        let s = score_set(&[0.5], &[0.5]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }

    #[test]
    fn single_sided_ground_truth_is_metric_error() {
        let s = score_set(&[0.9, 0.8], &[]);
        assert!(matches!(auroc(&s), Err(Error::Metric(_))));
        assert!(matches!(fpr95(&s), Err(Error::Metric(_))));
    }

    #[test]
    fn fpr95_extremes() {
        let s = score_set(&[0.9, 0.8, 0.85, 0.95], &[0.1, 0.2]);
        assert_eq!(fpr95(&s).unwrap(), 0.0);
        let s = score_set(&[0.5, 0.6, 0.7, 0.8], &[0.9, 0.95]);
        assert_eq!(fpr95(&s).unwrap(), 1.0);
    }

    #[test]
    fn fpr95_evenly_spaced_matches_sweep_oracle() {
        // known evenly spaced in (0.5, 1], unknown in (0, 0.6]
        let known: Vec<f64> = (1..=100).map(|i| 0.5 + 0.005 * i as f64).collect();
        let unknown: Vec<f64> = (1..=100).map(|i| 0.006 * i as f64).collect();
        let s = score_set(&known, &unknown);

        // oracle: exhaustive sweep over all observed scores
        let mut best_t = f64::NEG_INFINITY;
        for &cand in known.iter().chain(&unknown) {
            let tpr = known.iter().filter(|&&k| k >= cand).count() as f64 / known.len() as f64;
            if tpr >= 0.95 && cand > best_t {
                best_t = cand;
            }
        }
        let want =
            unknown.iter().filter(|&&u| u >= best_t).count() as f64 / unknown.len() as f64;
        assert_eq!(fpr95(&s).unwrap(), want);
        assert_eq!(fpr95_threshold(&s).unwrap(), best_t);
    }

    #[test]
    fn h_score_values() {
        assert_eq!(h_score(0.5, 0.5), 0.5);
        assert_eq!(h_score(0.0, 0.7), 0.0);
        assert_eq!(h_score(0.0, 0.0), 0.0);
        assert!((h_score(0.6, 0.4) - 0.48).abs() < 1e-15);
    }

    #[test]
    fn roc_is_monotone_and_area_matches_rank_auroc() {
        let s = score_set(
            &[0.9, 0.8, 0.8, 0.66, 0.31, 0.72],
            &[0.31, 0.5, 0.8, 0.11, 0.66],
        );
        let pts = roc_points(&s).unwrap();
        assert_eq!(*pts.first().unwrap(), (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let mut area = 0.0;
        for w in pts.windows(2) {
            area += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
        }
        assert!((area - auroc(&s).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn auroc_invariant_under_constant_shift() {
        let s = score_set(&[0.9, 0.4, 0.7], &[0.6, 0.3]);
        let a = auroc(&s).unwrap();
        let f = fpr95(&s).unwrap();
        let shifted = ScoreSet {
            scores: s.scores.iter().map(|v| v + 3.25).collect(),
            ..s.clone()
        };
        assert_eq!(auroc(&shifted).unwrap(), a);
        assert_eq!(fpr95(&shifted).unwrap(), f);
    }
}
