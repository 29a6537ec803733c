//! Central finite-difference gradient checker.
//!
//! Runs in f64 only; central differences drown in rounding noise at f32.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Outcome of a finite-difference sweep over a parameter list.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (parameter index, flat coordinate) of the worst disagreement.
    pub worst: (usize, usize),
    pub n_coords: usize,
    pub passed: bool,
}

/// Compare `analytic` gradients of a scalar objective against central
/// differences, perturbing every coordinate of every parameter.
///
/// Step size is `1e-5 * max(1, |w|)` per coordinate; the per-coordinate
/// relative error denominator is `max(1, |analytic|, |numeric|)`.
pub fn finite_diff_check<F>(
    mut objective: F,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    rel_tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::Contract(format!(
            "{} params vs {} gradient tensors",
            params.len(),
            analytic.len()
        )));
    }
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst = (0, 0);
    let mut n_coords = 0;

    for (pi, grad) in analytic.iter().enumerate() {
        for ci in 0..grad.numel() {
            let w = params[pi].data()[ci];
            let h = 1e-5 * w.abs().max(1.0);

            work[pi].data_mut()[ci] = w + h;
            let up = objective(&work)?;
            work[pi].data_mut()[ci] = w - h;
            let down = objective(&work)?;
            work[pi].data_mut()[ci] = w;

            if !up.is_finite() || !down.is_finite() {
                return Err(Error::numeric(
                    "finite_diff_check",
                    format!("objective not finite at param {pi} coord {ci}"),
                ));
            }
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = (pi, ci);
            }
            n_coords += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst,
        n_coords,
        passed: max_rel_err <= rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn quadratic_is_near_exact() {
        // f(w) = w^2 at w = 2: analytic 4, central difference exact for polynomials
        let params = vec![Tensor::scalar(2.0)];
        let analytic = vec![Tensor::scalar(4.0)];
        let report = finite_diff_check(
            |p: &[Tensor<f64>]| Ok(p[0].item()? * p[0].item()?),
            &params,
            &analytic,
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
        assert!(report.max_rel_err < 1e-8);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let params = vec![Tensor::vector(&[1.0, -3.0])];
        let analytic = vec![Tensor::zeros(vec![2])];
        let report =
            finite_diff_check(|_p: &[Tensor<f64>]| Ok(7.5), &params, &analytic, 1e-10).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn tape_composite_matches_finite_differences() {
        // loss = sum(gelu(x) * x) through the tape
        let x0 = Tensor::vector(&[0.3, -1.2, 2.0, 0.0]);
        let run = |p: &[Tensor<f64>]| -> Result<(f64, Tensor<f64>)> {
            let mut tape = Tape::new();
            let x = tape.leaf(p[0].clone(), true);
            let gx = tape.gelu(x);
            let prod = tape.mul_elem(gx, x)?;
            let loss = tape.sum_all(prod);
            tape.backward(loss)?;
            Ok((tape.value(loss).item()?, tape.grad(x)))
        };
        let (_, analytic) = run(std::slice::from_ref(&x0)).unwrap();
        let report = finite_diff_check(
            |p: &[Tensor<f64>]| run(p).map(|r| r.0),
            std::slice::from_ref(&x0),
            &[analytic],
            1e-9,
        )
        .unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
    }
}
