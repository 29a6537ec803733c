//! Parameter update rules: LARS and momentum SGD.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Lars,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Lars => "lars",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lars" => Ok(OptimizerKind::Lars),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Per-parameter momentum buffers plus a step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState<S: Scalar> {
    momentum: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn for_params(params: &[&Tensor<S>]) -> Self {
        OptimizerState {
            momentum: params
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
            step: 0,
        }
    }
}

fn norm<S: Scalar>(data: &[S]) -> S {
    data.iter().map(|&v| v * v).sum::<S>().sqrt()
}

fn check_grads<S: Scalar>(grads: &[Tensor<S>], names: &[String]) -> Result<()> {
    for (i, g) in grads.iter().enumerate() {
        if g.data().iter().any(|v| !v.is_finite()) {
            let name = names.get(i).map(String::as_str).unwrap_or("<param>");
            return Err(Error::numeric(
                "optimizer step",
                format!("non-finite gradient for parameter {name}"),
            ));
        }
    }
    Ok(())
}

/// LARS update, applied tensor by tensor:
/// `g' = g + wd*w`; `local_lr = trust * ||w|| / ||g'||` when both norms are
/// positive, else 1 (the zero-gradient guard makes the update's rescaling
/// invariance exact); `m <- momentum*m + local_lr*lr*g'`; `w <- w - m`.
pub fn lars_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[Tensor<S>],
    state: &mut OptimizerState<S>,
    cfg: &TrainConfig,
    lr: S,
    names: &[String],
) -> Result<()> {
    check_grads(grads, names)?;
    let wd = S::from_f64(cfg.weight_decay);
    let momentum = S::from_f64(cfg.momentum);
    let trust = S::from_f64(cfg.trust_coefficient);
    for ((w, g), m) in params.iter_mut().zip(grads).zip(&mut state.momentum) {
        let w_norm = norm(w.data());
        let mut g_decayed: Vec<S> = g
            .data()
            .iter()
            .zip(w.data())
            .map(|(&gv, &wv)| gv + wd * wv)
            .collect();
        let g_norm = norm(&g_decayed);
        let local_lr = if w_norm > S::zero() && g_norm > S::zero() {
            trust * w_norm / g_norm
        } else {
            S::one()
        };
        let step_scale = local_lr * lr;
        for v in g_decayed.iter_mut() {
            *v = *v * step_scale;
        }
        for ((mv, &gv), wv) in m
            .data_mut()
            .iter_mut()
            .zip(&g_decayed)
            .zip(w.data_mut())
        {
            *mv = momentum * *mv + gv;
            *wv = *wv - *mv;
        }
    }
    state.step += 1;
    Ok(())
}

/// Momentum SGD: `g' = g + wd*w`; `m <- momentum*m + g'`; `w <- w - lr*m`.
pub fn sgd_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[Tensor<S>],
    state: &mut OptimizerState<S>,
    cfg: &TrainConfig,
    lr: S,
    names: &[String],
) -> Result<()> {
    check_grads(grads, names)?;
    let wd = S::from_f64(cfg.weight_decay);
    let momentum = S::from_f64(cfg.momentum);
    for ((w, g), m) in params.iter_mut().zip(grads).zip(&mut state.momentum) {
        for (mv, (&gv, wv)) in m
            .data_mut()
            .iter_mut()
            .zip(g.data().iter().zip(w.data_mut()))
        {
            let g_decayed = gv + wd * *wv;
            *mv = momentum * *mv + g_decayed;
            *wv = *wv - lr * *mv;
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(momentum: f64, weight_decay: f64, trust: f64) -> TrainConfig {
        TrainConfig {
            momentum,
            weight_decay,
            trust_coefficient: trust,
            ..TrainConfig::default()
        }
    }

    fn one_param(data: &[f64]) -> (Vec<Tensor<f64>>, Vec<String>) {
        (vec![Tensor::vector(data)], vec!["w".into()])
    }

    #[test]
    fn lars_hand_computed_step() {
        // w=[3,4], g=[0,1], wd=0, momentum=0, trust=1, lr=0.1:
        // local_lr = 1 * 5 / 1 = 5, update = 5*0.1*[0,1] = [0,0.5]
        let (mut params, names) = one_param(&[3.0, 4.0]);
        let grads = vec![Tensor::vector(&[0.0, 1.0])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.0, 0.0, 1.0);
        let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
        lars_step(&mut refs, &grads, &mut state, &c, 0.1, &names).unwrap();
        assert_eq!(params[0].data(), &[3.0, 3.5]);
    }

    #[test]
    fn lars_zero_gradient_leaves_weights() {
        let (mut params, names) = one_param(&[3.0, 4.0]);
        let grads = vec![Tensor::vector(&[0.0, 0.0])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.0, 0.0, 1.0);
        let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
        lars_step(&mut refs, &grads, &mut state, &c, 0.1, &names).unwrap();
        assert_eq!(params[0].data(), &[3.0, 4.0]);
    }

    #[test]
    fn lars_two_steps_equal_one_doubled_step_for_constant_gradient() {
        // with momentum = 0 and wd = 0, the update per step is
        // trust*lr*||w||*ghat, so two steps match one at doubled lr only if
        // ||w|| is unchanged by the step; use g orthogonal-ish small check
        // via direct algebra on the stated rule instead: both paths applied.
        let g = Tensor::vector(&[0.6, 0.8]);
        let c = cfg(0.0, 0.0, 0.5);
        let names = vec!["w".to_string()];

        let run = |lr: f64, steps: usize| -> Vec<f64> {
            let mut params = vec![Tensor::vector(&[3.0, 4.0])];
            let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
            for _ in 0..steps {
                let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
                lars_step(&mut refs, std::slice::from_ref(&g), &mut state, &c, lr, &names)
                    .unwrap();
            }
            params[0].data().to_vec()
        };
        let two_small = run(0.01, 2);
        let one_big = run(0.02, 1);
        // ||w|| changes after the first small step, so the two disagree...
        let drift: f64 = two_small
            .iter()
            .zip(&one_big)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(drift > 0.0);
        // ...but agree to first order: the disagreement is O(lr^2)
        assert!(drift < 2.0 * 0.02 * 0.02);
    }

    #[test]
    fn lars_update_magnitude_invariant_to_gradient_rescaling() {
        let c = cfg(0.0, 0.0, 0.001);
        let names = vec!["w".to_string()];
        let lr = 0.1;
        let run = |gscale: f64| -> (Vec<f64>, f64) {
            let mut params = vec![Tensor::vector(&[3.0, 4.0])];
            let g = Tensor::vector(&[3.0 * gscale, 4.0 * gscale]);
            let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
            let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
            lars_step(&mut refs, std::slice::from_ref(&g), &mut state, &c, lr, &names).unwrap();
            let moved: Vec<f64> = params[0]
                .data()
                .iter()
                .zip([3.0, 4.0])
                .map(|(&w, w0)| w0 - w)
                .collect();
            let mag = (moved[0] * moved[0] + moved[1] * moved[1]).sqrt();
            (moved, mag)
        };
        let (d1, m1) = run(1.0);
        let (d2, m2) = run(1000.0);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() <= 1e-18, "direction changed: {a} vs {b}");
        }
        // trust * lr * ||w|| = 0.001 * 0.1 * 5, exact up to rounding: the
        // zero-gradient guard adds no epsilon to the denominator
        let want = 0.001 * 0.1 * 5.0;
        assert!((m1 - want).abs() <= want * 1e-12, "{m1} vs {want}");
        assert!((m2 - m1).abs() <= want * 1e-12, "{m2} vs {m1}");
    }

    #[test]
    fn sgd_single_step() {
        let (mut params, names) = one_param(&[1.0]);
        let grads = vec![Tensor::vector(&[1.0])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.0, 0.0, 0.001);
        let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
        sgd_step(&mut refs, &grads, &mut state, &c, 0.1, &names).unwrap();
        assert!((params[0].data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_two_step_trace() {
        // momentum 0.9, g=1 twice, lr=0.1, from w=0: w = -0.1 - 0.19 = -0.29
        let (mut params, names) = one_param(&[0.0]);
        let grads = vec![Tensor::vector(&[1.0])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.9, 0.0, 0.001);
        for _ in 0..2 {
            let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
            sgd_step(&mut refs, &grads, &mut state, &c, 0.1, &names).unwrap();
        }
        assert!((params[0].data()[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn sgd_weight_decay_only() {
        // w=1, wd=0.1, lr=0.1, momentum=0, g=0 -> w = 1 - 0.1*0.1 = 0.99
        let (mut params, names) = one_param(&[1.0]);
        let grads = vec![Tensor::vector(&[0.0])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.0, 0.1, 0.001);
        let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
        sgd_step(&mut refs, &grads, &mut state, &c, 0.1, &names).unwrap();
        assert!((params[0].data()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_with_parameter_name() {
        let (mut params, names) = one_param(&[1.0]);
        let grads = vec![Tensor::vector(&[f64::NAN])];
        let mut state = OptimizerState::for_params(&params.iter().collect::<Vec<_>>());
        let c = cfg(0.0, 0.0, 0.001);
        let mut refs: Vec<&mut Tensor<f64>> = params.iter_mut().collect();
        let err = sgd_step(&mut refs, &grads, &mut state, &c, 0.1, &names)
            .unwrap_err()
            .to_string();
        assert!(err.contains('w'), "{err}");
        assert_eq!(state.step, 0);
    }
}
