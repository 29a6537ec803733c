//! Pair losses: batch-mean MSE on similarity probabilities and binary
//! cross-entropy.
//!
//! Training builds the losses on the tape from raw head logits (sigmoid +
//! squared error, or fused softmax cross-entropy), which keeps the
//! cross-entropy numerically stable. The plain-value functions below define
//! the same quantities on probabilities.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};

fn check_lengths<S: Scalar>(sigma: &[S], labels: &[S]) -> Result<()> {
    if sigma.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} labels",
            sigma.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mean over the batch of `(sigma - l)^2`.
pub fn mse_pair_loss<S: Scalar>(sigma: &[S], labels: &[S]) -> Result<S> {
    check_lengths(sigma, labels)?;
    let n = S::from_f64(sigma.len() as f64);
    let total: S = sigma
        .iter()
        .zip(labels)
        .map(|(&s, &l)| (s - l) * (s - l))
        .sum();
    Ok(total / n)
}

/// Mean of `-(l ln sigma + (1 - l) ln(1 - sigma))`.
pub fn binary_ce_pair_loss<S: Scalar>(sigma: &[S], labels: &[S]) -> Result<S> {
    check_lengths(sigma, labels)?;
    let n = S::from_f64(sigma.len() as f64);
    let one = S::one();
    let total: S = sigma
        .iter()
        .zip(labels)
        .map(|(&s, &l)| -(l * s.ln() + (one - l) * (one - s).ln()))
        .sum();
    Ok(total / n)
}

/// Tape graph of the MSE pair loss on probabilities already on the tape.
pub fn mse_loss_graph<S: Scalar>(tape: &mut Tape<S>, sigma: Var, labels: &[S]) -> Result<Var> {
    let n = tape.value(sigma).numel();
    check_lengths(&vec![S::zero(); n], labels)?;
    let shape = tape.value(sigma).shape().to_vec();
    let l = tape.leaf(Tensor::new(shape, labels.to_vec())?, false);
    let diff = tape.sub(sigma, l)?;
    let sq = tape.mul_elem(diff, diff)?;
    Ok(tape.mean_all(sq))
}

/// Tape graph of the binary cross-entropy on probabilities.
pub fn binary_ce_loss_graph<S: Scalar>(
    tape: &mut Tape<S>,
    sigma: Var,
    labels: &[S],
) -> Result<Var> {
    let n = tape.value(sigma).numel();
    check_lengths(&vec![S::zero(); n], labels)?;
    let shape = tape.value(sigma).shape().to_vec();
    let l = tape.leaf(Tensor::new(shape.clone(), labels.to_vec())?, false);
    let ones = tape.leaf(Tensor::new(shape, vec![S::one(); n])?, false);
    let ln_s = tape.ln(sigma);
    let one_minus_s = tape.sub(ones, sigma)?;
    let ln_oms = tape.ln(one_minus_s);
    let one_minus_l = tape.sub(ones, l)?;
    let a = tape.mul_elem(l, ln_s)?;
    let b = tape.mul_elem(one_minus_l, ln_oms)?;
    let s = tape.add(a, b)?;
    let mean = tape.mean_all(s);
    Ok(tape.scale(mean, -S::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;

    #[test]
    fn perfect_prediction_gives_zero() {
        let loss = mse_pair_loss(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn mse_midpoint_value() {
        let loss = mse_pair_loss(&[0.5f64], &[1.0]).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mse_symmetric_under_complement() {
        let sigma = [0.3f64, 0.8, 0.55];
        let labels = [1.0f64, 0.0, 1.0];
        let a = mse_pair_loss(&sigma, &labels).unwrap();
        let cs: Vec<f64> = sigma.iter().map(|s| 1.0 - s).collect();
        let cl: Vec<f64> = labels.iter().map(|l| 1.0 - l).collect();
        let b = mse_pair_loss(&cs, &cl).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ce_midpoint_is_ln_two() {
        let loss = binary_ce_pair_loss(&[0.5f64], &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_above_scaled_mse_near_zero_below_in_middle() {
        // the regression curve in the comparison plot is ((p-1)/0.5)^2
        let ce = |p: f64| -p.ln();
        let scaled_mse = |p: f64| ((p - 1.0) / 0.5).powi(2);
        assert!(ce(0.01) > scaled_mse(0.01));
        assert!((ce(0.01) - 4.605170185988091).abs() < 1e-12);
        assert!((scaled_mse(0.01) - 3.9204).abs() < 1e-12);
        assert!(ce(0.5) < scaled_mse(0.5));
        assert!((scaled_mse(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(mse_pair_loss(&[0.5f64], &[1.0, 0.0]).is_err());
        assert!(binary_ce_pair_loss(&[0.5f64], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn losses_nonnegative_and_zero_only_at_perfection() {
        let sigma = [0.2f64, 0.9, 0.5];
        let labels = [0.0f64, 1.0, 1.0];
        assert!(mse_pair_loss(&sigma, &labels).unwrap() > 0.0);
        assert!(binary_ce_pair_loss(&sigma, &labels).unwrap() > 0.0);
        assert_eq!(mse_pair_loss(&[0.0f64, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    fn grad_wrt_sigma(
        build: impl Fn(&mut Tape<f64>, Var, &[f64]) -> Result<Var>,
        sigma: &[f64],
        labels: &[f64],
    ) {
        let run = |s: &[Tensor<f64>]| -> Result<(f64, Tensor<f64>)> {
            let mut tape = Tape::new();
            let sv = tape.leaf(s[0].clone(), true);
            let loss = build(&mut tape, sv, labels)?;
            tape.backward(loss)?;
            Ok((tape.value(loss).item()?, tape.grad(sv)))
        };
        let s0 = Tensor::vector(sigma);
        let (_, analytic) = run(std::slice::from_ref(&s0)).unwrap();
        let report = finite_diff_check(
            |p| run(p).map(|r| r.0),
            std::slice::from_ref(&s0),
            &[analytic],
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let sigma = [0.3f64, 0.7, 0.51, 0.92];
        let labels = [1.0f64, 0.0, 1.0, 1.0];
        grad_wrt_sigma(mse_loss_graph, &sigma, &labels);
        grad_wrt_sigma(binary_ce_loss_graph, &sigma, &labels);
    }
}
