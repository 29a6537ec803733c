//! Learning-rate schedule: linear warmup, then constant.

use crate::training::TrainConfig;

/// `base_lr * (iter+1)/warmup` during warmup, `base_lr` afterwards.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    if iter < cfg.warmup_iters {
        cfg.base_lr * (iter + 1) as f64 / cfg.warmup_iters as f64
    } else {
        cfg.base_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(base_lr: f64, warmup: usize) -> TrainConfig {
        TrainConfig {
            base_lr,
            warmup_iters: warmup,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn halfway_through_warmup() {
        let c = cfg(0.008, 500);
        assert_eq!(lr_at(249, &c), 0.004);
    }

    #[test]
    fn warmup_end_reaches_base_lr() {
        let c = cfg(0.008, 500);
        assert_eq!(lr_at(500, &c), 0.008);
        assert_eq!(lr_at(499, &c), 0.008);
        assert_eq!(lr_at(10_000, &c), 0.008);
    }

    #[test]
    fn degenerate_warmup_gives_full_lr_immediately() {
        let c = cfg(0.02, 1);
        assert_eq!(lr_at(0, &c), 0.02);
    }
}
