//! Scratch harness: train on the separable benchmark and print the trace.

use relnov::data::{generate_synthetic, SyntheticSpec};
use relnov::evaluation::{evaluate, EvalOptions, Scorer};
use relnov::model::{ModelConfig, RelationalModel};
use relnov::training::{train, LossKind, OptimizerKind, TrainConfig};

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let iters = env_usize("ITERS", 400);
    let batch = env_usize("BATCH", 128);
    let lr = env_f64("LR", 0.02);
    let wd = env_f64("WD", 5e-5);
    let trust = env_f64("TRUST", 0.001);
    let opt = std::env::var("OPT").unwrap_or_else(|_| "sgd".into());
    let loss = std::env::var("LOSS").unwrap_or_else(|_| "mse".into());
    let seeds = env_usize("SEEDS", 1) as u64;
    let base_seed = env_usize("SEED", 0) as u64;
    let verbose = std::env::var("VERBOSE").is_ok();

    let loss_kind = LossKind::parse(&loss).unwrap();
    let head_mode = match loss_kind {
        LossKind::Mse => relnov::model::HeadMode::RegressionSigmoid,
        LossKind::BinaryCe => relnov::model::HeadMode::Classification2Way,
    };

    let mut aurocs = Vec::new();
    let mut fprs = Vec::new();
    for seed in base_seed..base_seed + seeds {
        let spec = SyntheticSpec {
            dims: 16,
            known_classes: 5,
            unknown_classes: 5,
            samples_per_class: 100,
            class_sep: 6.0,
            seed,
            ..SyntheticSpec::default()
        };
        let (support, test) = generate_synthetic(&spec).unwrap();
        let mut model = RelationalModel::<f32>::init(ModelConfig {
            d_in: 16,
            d_feat: env_usize("DFEAT", 64),
            d_model: env_usize("DMODEL", 64),
            num_blocks: env_usize("BLOCKS", 4),
            num_heads: env_usize("HEADS", 4),
            head_mode,
            seed,
            ..ModelConfig::default()
        })
        .unwrap();

        let cfg = TrainConfig {
            iterations: iters,
            batch_size: batch,
            base_lr: lr,
            weight_decay: wd,
            trust_coefficient: trust,
            warmup_iters: 100,
            optimizer: OptimizerKind::parse(&opt).unwrap(),
            loss: loss_kind,
            seed,
            log_every: 1,
            ..TrainConfig::default()
        };

        let t0 = std::time::Instant::now();
        let trace = train(&mut model, &support, &cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let tail: Vec<f32> = trace.iter().rev().take(100).map(|p| p.loss).collect();
        let tail_mean = tail.iter().sum::<f32>() / tail.len() as f32;

        let (scores, report) = evaluate(
            &support,
            &test,
            &Scorer::Relational(&model),
            &EvalOptions::default(),
        )
        .unwrap();
        println!(
            "seed {seed}: train {dt:.1}s ({:.1} ms/iter)  final-100 loss {tail_mean:.5}  auroc {:.4} fpr95 {:.4} acc {:.4}",
            1000.0 * dt / iters as f64,
            report.auroc,
            report.fpr95,
            report.acc
        );
        if verbose {
            for p in trace.iter().step_by((iters / 15).max(1)) {
                println!("  iter {:4}  loss {:.5}  lr {:.5}", p.iter, p.loss, p.lr);
            }
            let quantiles = |mut v: Vec<f64>| -> Vec<f64> {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                [0.05, 0.25, 0.5, 0.75, 0.95]
                    .iter()
                    .map(|q| v[((v.len() - 1) as f64 * q) as usize])
                    .collect()
            };
            println!("  known   {:?}", quantiles(scores.known_scores()));
            println!("  unknown {:?}", quantiles(scores.unknown_scores()));
        }
        aurocs.push(report.auroc);
        fprs.push(report.fpr95);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "MEAN over {} seeds: auroc {:.4} fpr95 {:.4}",
        seeds,
        mean(&aurocs),
        mean(&fprs)
    );
}
